#pragma once

#include <cstdint>
#include <string>

#include "neuvis/params.hpp"

namespace neuvis {

// Maps projected neural-visual vectors into the frozen image-embedding space.
// Two modes share one predict() contract:
//   mlp_direct  direct MSE regression through a two-hidden-layer MLP
//   denoising   a conditional denoiser trained to recover the clean target
//               from a noised copy at a uniformly sampled step, then sampled
//               deterministically (DDIM-style) from a seeded start
// The "zero" schedule degenerates every noised copy to zero, which turns
// denoising into plain conditional regression; with n_steps = 1 the two
// modes solve the same problem (asserted by tests).
enum class PriorMode { mlp_direct, denoising };
enum class NoiseSchedule { linear, zero };

const char* prior_mode_name(PriorMode m);
PriorMode prior_mode_from_name(const std::string& s);
const char* schedule_name(NoiseSchedule s);
NoiseSchedule schedule_from_name(const std::string& s);

struct PriorConfig {
  PriorMode mode = PriorMode::mlp_direct;
  Eigen::Index dim = 1024;  // embedding width
  Eigen::Index hidden_dim = 256;
  Eigen::Index n_steps = 1;  // denoising only
  NoiseSchedule schedule = NoiseSchedule::linear;
  std::uint64_t seed = 1;

  void validate() const;
  // signal-retention coefficient at step t: 1 at t = 0, decaying to 0
  double alpha_bar(std::int64_t t) const;
  Eigen::Index input_dim() const;  // d (direct) or 2d + temb (denoising)

  KvList to_kv() const;
  static PriorConfig from_kv(const KvList& kv);
};

inline constexpr Eigen::Index kPriorTimeEmbedDim = 8;

// Sinusoidal embedding of a step index, width kPriorTimeEmbedDim.
Eigen::RowVectorXd prior_time_embedding(std::int64_t t);

class DiffusionPrior {
 public:
  static DiffusionPrior init(const PriorConfig& cfg);
  static DiffusionPrior from_parts(const PriorConfig& cfg, ParamStore params);

  const PriorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // B x dim -> B x dim; deterministic given config (seeded start in
  // denoising mode is derived from the config seed and the input bytes).
  Mat predict(const Mat& zv_hat) const;

  // Tape forward of the regression net on a prebuilt input block.
  Graph::Id build_net(Graph& g, GraphBinder& bind, const Mat& input) const;
  Mat net_value(const Mat& input) const;

  void save(const std::string& path, const KvList& extra_meta = {}) const;
  static DiffusionPrior load(const std::string& path, KvList* meta_out = nullptr);

  DiffusionPrior() = default;

 private:
  PriorConfig cfg_;
  ParamStore params_;
};

struct PriorTrainConfig {
  std::int64_t epochs = 200;
  double lr = 1e-3;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

// Paired rows: zv_hat (inputs) and z_v (frozen-tower targets), both B x dim.
DiffusionPrior train_prior(const PriorConfig& cfg, const Mat& zv_hat,
                           const Mat& z_v, const PriorTrainConfig& tc);

// Mean squared error of predict() against targets.
double prior_mse(const DiffusionPrior& prior, const Mat& zv_hat, const Mat& z_v);

}  // namespace neuvis
