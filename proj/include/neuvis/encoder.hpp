#pragma once

#include <string>
#include <vector>

#include "neuvis/params.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

// Signal encoder: temporal convolution -> spatial convolution (joint over
// channels and temporal filters) -> mean pooling over time -> optional
// pre-norm multi-head self-attention block over temporal tokens -> flatten
// -> linear feature head. Convolutions are expressed as index-gather plus
// matmul so the whole forward pass lives on the autodiff tape.
struct EncoderConfig {
  Eigen::Index channels = 63;
  Eigen::Index samples = 250;
  Eigen::Index temporal_kernel = 25;
  Eigen::Index temporal_filters = 40;
  Eigen::Index spatial_filters = 40;
  Eigen::Index pool = 5;  // temporal mean-pool width
  Eigen::Index feature_dim = 256;
  Eigen::Index embed_dim = 1024;
  bool attention = true;
  Eigen::Index attention_heads = 4;
  Eigen::Index attention_ffn = 80;
  double dropout_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  Eigen::Index conv_steps() const { return samples - temporal_kernel + 1; }
  Eigen::Index tokens() const { return conv_steps() / pool; }

  KvList to_kv() const;
  static EncoderConfig from_kv(const KvList& kv);
};

// Encoder, visual projector, semantic projector, learnable temperature.
class AlignModel {
 public:
  static AlignModel init(const EncoderConfig& cfg);
  static AlignModel from_parts(const EncoderConfig& cfg, ParamStore params);

  const EncoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  double tau() const;

  // Graph builders (shared by training and evaluation).
  // batch_signal stacks B trials as a (B*channels) x samples matrix.
  Graph::Id build_encode(Graph& g, GraphBinder& bind, const Mat& batch_signal,
                         Eigen::Index batch, bool training,
                         Rng* dropout_rng) const;
  Graph::Id build_project(Graph& g, GraphBinder& bind, Graph::Id features,
                          const std::string& head) const;  // "v" or "t"
  Graph::Id build_tau(Graph& g, GraphBinder& bind) const;  // exp(log_tau), 1x1

  // Eval-mode conveniences.
  Mat encode(const std::vector<const NeuralTrial*>& batch) const;
  Mat project_visual(const Mat& features) const;
  Mat project_semantic(const Mat& features) const;

  void save(const std::string& path, const KvList& extra_meta = {}) const;
  static AlignModel load(const std::string& path, KvList* meta_out = nullptr);

  // An empty model; fill via init(), load() or from_parts().
  AlignModel() = default;

 private:
  EncoderConfig cfg_;
  ParamStore params_;
};

Mat stack_batch_signal(const std::vector<const NeuralTrial*>& batch,
                       const EncoderConfig& cfg);

}  // namespace neuvis
