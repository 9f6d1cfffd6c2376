#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/encoder.hpp"
#include "neuvis/prior.hpp"
#include "neuvis/qformer.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

// Conditioning inputs for one generated image: an image-space embedding from
// the prior plus prompt and pooled-prompt embeddings from the Q-Former.
// Values are quantized to float32 at creation so that writing and re-reading
// a bundle file reproduces the in-memory bundles bit-exactly.
struct ConditionBundle {
  std::string subject_id;
  std::int64_t category_id = 0;
  std::int64_t image_id = 0;
  std::int64_t repetition = 0;

  Eigen::RowVectorXd image_embedding;  // dim
  Mat prompt_embeddings;               // n_queries x d_prompt
  Eigen::RowVectorXd pooled_prompt;    // d_pool
};

// One bundle per input trial, in input order, plus the provenance needed to
// trace each file back to the exact model checkpoints that produced it.
struct BundleSet {
  Eigen::Index dim = 0;
  Eigen::Index n_queries = 0;
  Eigen::Index d_prompt = 0;
  Eigen::Index d_pool = 0;
  std::string align_fingerprint;
  std::string prior_fingerprint;
  std::string qformer_fingerprint;
  std::vector<ConditionBundle> bundles;
};

// Runs trials through the frozen alignment model, the prior, and the
// Q-Former. Produces conditioning data only; nothing here runs a generator.
BundleSet export_conditions(const TrialSet& trials, const AlignModel& align,
                            const DiffusionPrior& prior, const QFormer& qformer);

// Same, and writes the set to `path` (condition-bundle-v1 inside an NVTC1
// container; see save_bundles).
BundleSet export_conditions(const TrialSet& trials, const AlignModel& align,
                            const DiffusionPrior& prior, const QFormer& qformer,
                            const std::string& path);

// File layout: NVTC1 container with meta keys
//   format, count, dim, n_queries, d_prompt, d_pool,
//   align_fingerprint, prior_fingerprint, qformer_fingerprint,
//   subject<i> (one per bundle)
// and tensors
//   image_embeddings   f32  count x dim
//   prompt_embeddings  f32  count x n_queries x d_prompt
//   pooled_embeddings  f32  count x d_pool
//   category_ids, image_ids, repetitions  i64  count
void save_bundles(const BundleSet& set, const std::string& path);
BundleSet load_bundles(const std::string& path);

}  // namespace neuvis
