#include "neuvis/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "neuvis/errors.hpp"

namespace neuvis {

const char* split_name(Split s) {
  return s == Split::train ? "train" : "test";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError("unknown split name: " + s);
}

Eigen::Index TrialSet::channels() const {
  if (trials.empty()) throw DataError("empty trial set has no channel count");
  return trials.front().signal.rows();
}

Eigen::Index TrialSet::samples() const {
  if (trials.empty()) throw DataError("empty trial set has no sample count");
  return trials.front().signal.cols();
}

double TrialSet::sample_rate_hz() const {
  if (trials.empty()) throw DataError("empty trial set has no sample rate");
  return trials.front().sample_rate_hz;
}

const StimulusRecord& TrialSet::stimulus(std::int64_t image_id) const {
  for (const auto& s : catalog)
    if (s.image_id == image_id) return s;
  throw DataError("image_id " + std::to_string(image_id) + " not in catalog");
}

std::vector<std::int64_t> TrialSet::category_ids() const {
  std::set<std::int64_t> ids;
  for (const auto& t : trials) ids.insert(t.category_id);
  return {ids.begin(), ids.end()};
}

void TrialSet::validate() const {
  if (trials.empty()) throw DataError("trial set has no trials");
  const Eigen::Index c = trials.front().signal.rows();
  const Eigen::Index t = trials.front().signal.cols();
  const double fs = trials.front().sample_rate_hz;
  if (static_cast<Eigen::Index>(channel_names.size()) != c)
    throw DataError("channel_names length does not match channel count");
  std::set<std::int64_t> catalog_images;
  for (const auto& s : catalog) {
    if (s.coarse_text.empty()) throw DataError("empty coarse_text for image " + std::to_string(s.image_id));
    if (s.fine_text.empty()) throw DataError("empty fine_text for image " + std::to_string(s.image_id));
    if (!catalog_images.insert(s.image_id).second)
      throw DataError("duplicate image_id in catalog: " + std::to_string(s.image_id));
  }
  for (const auto& tr : trials) {
    if (tr.signal.rows() != c || tr.signal.cols() != t)
      throw DataError("inconsistent trial dimensions in trial set");
    if (tr.sample_rate_hz != fs)
      throw DataError("inconsistent sample rate in trial set");
    if (tr.t0_ms != trials.front().t0_ms)
      throw DataError("inconsistent epoch alignment (t0_ms) in trial set");
    if (tr.sample_rate_hz <= 0.0) throw DataError("non-positive sample rate");
    if (tr.repetition < 0) throw DataError("negative repetition index");
    if (!tr.signal.allFinite())
      throw DataError("non-finite signal values in trial for image " +
                      std::to_string(tr.image_id));
    if (catalog_images.count(tr.image_id) == 0)
      throw DataError("trial references image_id " + std::to_string(tr.image_id) +
                      " missing from catalog");
  }
}

const std::vector<std::string>* ChannelGroupMap::find(const std::string& region) const {
  for (const auto& [name, chans] : groups)
    if (name == region) return &chans;
  return nullptr;
}

ChannelGroupMap ChannelGroupMap::load(const std::string& path) {
  ChannelGroupMap map;
  for (const auto& [region, value] : read_kv_file(path)) {
    std::vector<std::string> chans;
    for (auto& c : split(value, ',')) {
      std::string name = trim(c);
      if (!name.empty()) chans.push_back(name);
    }
    if (chans.empty()) throw DataError("region " + region + " lists no channels");
    map.groups.emplace_back(region, std::move(chans));
  }
  if (map.groups.empty()) throw DataError("channel group map is empty: " + path);
  return map;
}

void ChannelGroupMap::save(const std::string& path) const {
  KvList kv;
  for (const auto& [region, chans] : groups)
    kv.emplace_back(region, join(chans, ","));
  write_kv_file(path, kv);
}

void SyntheticSpec::validate() const {
  if (n_categories <= 0) throw ConfigError("synthetic: n_categories must be positive");
  if (n_test_categories <= 0) throw ConfigError("synthetic: n_test_categories must be positive");
  if (images_per_category <= 0) throw ConfigError("synthetic: images_per_category must be positive");
  if (repetitions <= 0) throw ConfigError("synthetic: repetitions must be positive");
  if (channels <= 0) throw ConfigError("synthetic: channels must be positive");
  if (samples <= 0) throw ConfigError("synthetic: samples must be positive");
  if (embed_dim <= 0) throw ConfigError("synthetic: embed_dim must be positive");
  if (embed_dim % 2 != 0) throw ConfigError("synthetic: embed_dim must be even (category/image halves)");
  if (sample_rate_hz <= 0.0) throw ConfigError("synthetic: sample_rate_hz must be positive");
  if (noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma must be nonnegative");
  if (n_categories < embed_dim / 2)
    throw ConfigError("synthetic: need n_categories >= embed_dim/2 so training spans the category subspace");
  if ((inform_start_ms < 0.0) != (inform_end_ms < 0.0))
    throw ConfigError("synthetic: inform window needs both start and end");
  if (inform_start_ms >= 0.0 && inform_start_ms >= inform_end_ms)
    throw ConfigError("synthetic: inform window must have start < end");
  for (auto c : inform_channels)
    if (c < 0 || c >= channels)
      throw ConfigError("synthetic: inform channel index out of range");
}

}  // namespace neuvis
