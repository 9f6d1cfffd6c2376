#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuvis/common.hpp"

namespace neuvis {

enum class Split { train, test };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

// One recorded (or synthesized) trial: channels x samples.
// Signals are stored float32 to match the on-disk layout exactly.
struct NeuralTrial {
  MatF signal;  // C x T
  std::string subject_id;
  std::int64_t category_id = 0;
  std::int64_t image_id = 0;
  std::int64_t repetition = 0;
  double sample_rate_hz = 0.0;
  double t0_ms = 0.0;  // time of sample 0 relative to stimulus onset
};

struct StimulusRecord {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  std::string image_ref;
  std::string coarse_text;
  std::string fine_text;
};

struct TrialSet {
  std::vector<NeuralTrial> trials;
  std::vector<StimulusRecord> catalog;
  Split split = Split::train;
  std::vector<std::string> channel_names;

  Eigen::Index channels() const;
  Eigen::Index samples() const;
  double sample_rate_hz() const;
  const StimulusRecord& stimulus(std::int64_t image_id) const;
  std::vector<std::int64_t> category_ids() const;  // sorted, unique
  void validate() const;  // dims, finiteness, catalog join
};

struct MsInterval {
  double start_ms = 0.0;
  double end_ms = 0.0;
};

struct PreprocessConfig {
  double target_rate_hz = 250.0;
  double window_start_ms = 0.0;    // onset-relative
  double window_end_ms = 1000.0;
  std::optional<MsInterval> baseline_ms;
  bool baseline_auto = true;  // use [-100, 0] ms when pre-stimulus data exists
  bool noise_normalize = false;
  bool average_repetitions = true;
};

struct ChannelGroupMap {
  // region name -> channel names, insertion-ordered
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;

  const std::vector<std::string>* find(const std::string& region) const;
  static ChannelGroupMap load(const std::string& path);
  void save(const std::string& path) const;
};

struct SyntheticSpec {
  std::int64_t n_categories = 10;        // train categories
  std::int64_t n_test_categories = 5;    // held-out categories, disjoint ids
  std::int64_t images_per_category = 4;
  std::int64_t repetitions = 2;
  std::int64_t channels = 8;
  std::int64_t samples = 32;
  std::int64_t embed_dim = 16;
  double sample_rate_hz = 250.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;

  // optional: restrict the informative encoding to a time window and/or a
  // channel subset so ablations have a known ground truth
  double inform_start_ms = -1.0;   // <0 means whole trial
  double inform_end_ms = -1.0;
  std::vector<std::int64_t> inform_channels;  // empty means all channels

  void validate() const;
};

// Ground truth produced alongside synthetic data: exact latents per image
// and per category, so downstream decoding is checkable at 100%.
struct SyntheticOracle {
  Mat image_latents;              // n_images x embed_dim, row i for image_id i
  Mat category_latents;           // n_categories_total x embed_dim
  std::vector<std::int64_t> image_ids;
  std::vector<std::int64_t> category_ids;
  Mat mixing;                     // channels x embed_dim spatial map
  Mat temporal_basis;             // embed_dim x samples
};

}  // namespace neuvis
