#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neuvis/params.hpp"
#include "neuvis/providers.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

// Query transformer that maps a d_in-wide semantic vector to per-query
// prompt embeddings plus one pooled prompt embedding. The input vector is
// reshaped into d_in / d_model tokens of width d_model; learned queries
// self-attend, cross-attend to those tokens with scale exactly 1/sqrt(d_model),
// pass through a position-wise FFN, and feed two linear output heads.
struct QFormerConfig {
  Eigen::Index n_queries = 8;
  Eigen::Index d_model = 64;
  Eigen::Index n_heads = 4;
  Eigen::Index ffn_dim = 128;
  Eigen::Index d_in = 1024;     // width of the incoming semantic vector
  Eigen::Index d_prompt = 64;   // per-query output width
  Eigen::Index d_pool = 32;     // pooled output width
  std::uint64_t seed = 1;

  void validate() const;
  Eigen::Index tokens() const { return d_in / d_model; }
  Eigen::Index head_dim() const { return d_model / n_heads; }

  KvList to_kv() const;
  static QFormerConfig from_kv(const KvList& kv);
};

// Plain-matrix attention blocks; the tape-based builders must match these
// exactly, and the hand oracles in the tests target them directly.
Mat softmax_rows_value(const Mat& x);
Mat self_attention_value(const Mat& x, const Mat& wq, const Mat& wk,
                         const Mat& wv, const Mat& wo, Eigen::Index n_heads);
// Single-head scaled dot-product attention; no output projection, so each
// output row is a convex combination of the projected value rows.
Mat cross_attention_value(const Mat& queries, const Mat& tokens, const Mat& wq,
                          const Mat& wk, const Mat& wv);

struct QFormerOutput {
  Mat prompts;  // (B * n_queries) x d_prompt, per-sample blocks
  Mat pooled;   // B x d_pool
};

class QFormer {
 public:
  static QFormer init(const QFormerConfig& cfg);
  static QFormer from_parts(const QFormerConfig& cfg, ParamStore params);

  const QFormerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Self-attended learned queries (input-independent).
  Mat attended_queries() const;

  QFormerOutput forward(const Mat& zs) const;  // zs is B x d_in

  // Tape version of forward for training; returns {prompts, pooled}.
  std::pair<Graph::Id, Graph::Id> build_forward(Graph& g, GraphBinder& bind,
                                                const Mat& zs) const;

  void save(const std::string& path, const KvList& extra_meta = {}) const;
  static QFormer load(const std::string& path, KvList* meta_out = nullptr);

  QFormer() = default;

 private:
  QFormerConfig cfg_;
  ParamStore params_;
};

// Stand-in for a frozen text tower at desk scale: deterministic seeded
// linear expansions of the concatenated coarse and fine text embeddings
// produce the per-query prompt targets and the pooled target.
struct PromptTargets {
  Mat prompts;  // (N * n_queries) x d_prompt, per-image blocks
  Mat pooled;   // N x d_pool
  std::vector<std::int64_t> image_ids;
};

PromptTargets build_prompt_targets(const std::vector<std::int64_t>& image_ids,
                                   const EmbeddingProvider& provider,
                                   const QFormerConfig& cfg,
                                   std::uint64_t seed);

struct QFormerTrainConfig {
  std::int64_t epochs = 200;
  double lr = 1e-3;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

// Mean squared error of both heads against their targets, summed.
double qformer_loss(const QFormer& model, const Mat& zs, const Mat& prompts,
                    const Mat& pooled);

// Adam on the summed MSE of both heads. Rows of zs pair with per-sample
// blocks of target prompts and rows of target pooled.
QFormer train_qformer(QFormer model, const Mat& zs, const Mat& prompts,
                      const Mat& pooled, const QFormerTrainConfig& cfg);

}  // namespace neuvis
