#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/providers.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

enum class Modality { neural_visual, neural_semantic, image, coarse_text, fine_text };

struct EmbeddingBatch {
  Mat data;  // B x d
  Modality modality = Modality::neural_visual;
  std::vector<std::int64_t> ids;  // image ids, length B

  void validate() const;
};

// Frozen gallery built from the test split's stimuli.
struct TemplateBank {
  Mat image_templates;  // M x d
  std::vector<std::int64_t> image_ids;
  Mat category_templates;  // K x d
  std::vector<std::int64_t> category_ids;
  std::string provider_fingerprint;

  void validate() const;
  std::string fingerprint() const;
};

TemplateBank build_templates(const std::vector<StimulusRecord>& test_catalog,
                             const EmbeddingProvider& provider);

struct RetrievalResult {
  std::int64_t query_id = 0;
  std::vector<std::int64_t> ranked_ids;  // descending cosine, ties by id
  std::vector<double> scores;            // nonincreasing
};

// Full cosine ranking of each query row against the given templates.
std::vector<RetrievalResult> rank_against(const Mat& queries,
                                          const std::vector<std::int64_t>& query_ids,
                                          const Mat& templates,
                                          const std::vector<std::int64_t>& template_ids);

std::vector<RetrievalResult> retrieve(const EmbeddingBatch& zv_hat,
                                      const TemplateBank& bank);
std::vector<RetrievalResult> classify(const EmbeddingBatch& zs_hat,
                                      const TemplateBank& bank);

struct TopKReport {
  std::string task;  // "retrieval" or "classification"
  double top1 = 0.0;
  double top5 = 0.0;
  std::int64_t n_queries = 0;
  std::vector<std::int64_t> ranks;  // 1-based rank of the true id per query

  double topk(std::int64_t k) const;
};

TopKReport topk_accuracy(const std::vector<RetrievalResult>& results,
                         const std::vector<std::int64_t>& truth,
                         const std::string& task);

}  // namespace neuvis
