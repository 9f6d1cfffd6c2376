#include "neuvis/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "neuvis/errors.hpp"

namespace neuvis {

Mat encode_features(const AlignModel& model, const TrialSet& ts,
                    Eigen::Index chunk) {
  if (ts.trials.empty()) throw DataError("cannot encode an empty trial set");
  if (chunk < 1) throw ConfigError("chunk must be positive");
  const auto n = static_cast<Eigen::Index>(ts.trials.size());
  Mat features(n, model.config().feature_dim);
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index count = std::min(chunk, n - start);
    std::vector<const NeuralTrial*> batch;
    batch.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i)
      batch.push_back(&ts.trials[static_cast<std::size_t>(start + i)]);
    features.middleRows(start, count) = model.encode(batch);
  }
  return features;
}

ZeroshotReport evaluate_zeroshot(const AlignModel& model, const TrialSet& test_ts,
                                 const EmbeddingProvider& provider) {
  auto bank = build_templates(test_ts.catalog, provider);

  const Mat features = encode_features(model, test_ts);

  EmbeddingBatch zv_hat;
  zv_hat.modality = Modality::neural_visual;
  zv_hat.data = model.project_visual(features);
  EmbeddingBatch zs_hat;
  zs_hat.modality = Modality::neural_semantic;
  zs_hat.data = model.project_semantic(features);

  std::vector<std::int64_t> category_truth;
  for (const auto& t : test_ts.trials) {
    zv_hat.ids.push_back(t.image_id);
    zs_hat.ids.push_back(t.image_id);
    category_truth.push_back(t.category_id);
  }

  ZeroshotReport rep;
  rep.retrieval =
      topk_accuracy(retrieve(zv_hat, bank), zv_hat.ids, "retrieval");
  rep.classification = topk_accuracy(classify(zs_hat, bank), category_truth,
                                     "classification");
  return rep;
}

TopKReport validation_retrieval(const AlignModel& model, const TrialSet& val_ts,
                                const EmbeddingProvider& provider) {
  if (val_ts.trials.empty()) throw ConfigError("validation set is empty");

  std::set<std::int64_t> unique_ids;
  for (const auto& t : val_ts.trials) unique_ids.insert(t.image_id);

  Mat gallery(static_cast<Eigen::Index>(unique_ids.size()), provider.dim());
  std::vector<std::int64_t> gallery_ids;
  Eigen::Index r = 0;
  for (auto id : unique_ids) {
    gallery.row(r++) = provider.image_embedding(id).transpose();
    gallery_ids.push_back(id);
  }

  const Mat features = encode_features(model, val_ts);
  const Mat zv_hat = model.project_visual(features);
  std::vector<std::int64_t> truth;
  for (const auto& t : val_ts.trials) truth.push_back(t.image_id);

  auto results = rank_against(zv_hat, truth, gallery, gallery_ids);
  return topk_accuracy(results, truth, "retrieval");
}

std::string report_tsv_header() {
  return "label\ttask\tn_queries\ttop1\ttop5\n";
}

std::string report_tsv_row(const std::string& label, const TopKReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s\t%s\t%lld\t%.6f\t%.6f\n", label.c_str(),
                r.task.c_str(), static_cast<long long>(r.n_queries), r.top1,
                r.top5);
  return buf;
}

}  // namespace neuvis
