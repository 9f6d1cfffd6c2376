#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "neuvis/encoder.hpp"
#include "neuvis/losses.hpp"
#include "neuvis/providers.hpp"
#include "neuvis/types.hpp"

namespace neuvis {

struct AlignmentConfig {
  double alpha = 0.5;
  double beta = 2.0;
  double lr = 2e-4;
  std::int64_t epochs = 100;
  std::int64_t batch_size = 256;
  double tau_init = 0.07;
  std::uint64_t seed = 1;
  std::int64_t val_count = 740;  // samples drawn once per run seed

  void validate() const;
  KvList to_kv() const;
  static AlignmentConfig from_kv(const KvList& kv);
};

// Everything needed to stop and resume a run bit-exactly: the live model
// (with optimizer moments inside its ParamStore), the best checkpoint so
// far, and the epoch cursor. Per-epoch randomness is derived from
// cfg.seed and the absolute epoch index, so no rng state is stored.
struct TrainState {
  AlignModel model;
  AlignmentConfig cfg;
  std::int64_t next_epoch = 0;
  bool has_best = false;
  double best_val_top1 = -1.0;
  std::int64_t best_epoch = -1;
  ParamStore best_params;

  AlignModel best_model() const;  // model cfg + best params

  void save(const std::string& dir) const;
  static TrainState load(const std::string& dir);
};

TrainState init_train_state(const EncoderConfig& enc_cfg,
                            const AlignmentConfig& cfg);

// Deterministic by-sample split: val_count samples drawn without
// replacement from the full set; the rest keep their order.
std::pair<TrialSet, TrialSet> split_validation(const TrialSet& ts,
                                               std::int64_t val_count,
                                               std::uint64_t seed);

struct StepRecord {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  LossBreakdown loss;
  double tau = 0.0;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  bool new_best = false;
};

struct TrainOptions {
  std::string log_path;      // append-only JSONL; empty disables logging
  std::string snapshot_dir;  // non-finite-loss diagnostics; empty disables
  std::vector<StepRecord>* step_records = nullptr;
  std::vector<EpochRecord>* epoch_records = nullptr;
};

// Runs cfg.epochs - state.next_epoch remaining epochs of mini-batch Adam
// over encoder + projectors + temperature. The provider stays frozen
// (fingerprint-checked). Tracks validation top-1 retrieval per epoch and
// retains the best checkpoint, ties resolved toward the later epoch.
TrainState train_alignment(TrainState state, const TrialSet& train_ts,
                           const TrialSet& val_ts,
                           const EmbeddingProvider& provider,
                           const TrainOptions& opts = {});

// Generic central-finite-difference gradient verification. `loss` must
// compute the objective from the current parameter values; when
// `with_grads` is set it must also leave fresh gradients in the store.
struct GradProbe {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradProbe> probes;
  double max_rel_err = 0.0;
};

GradCheckReport check_gradients(ParamStore& params,
                                const std::function<double(bool with_grads)>& loss,
                                std::int64_t probes_per_tensor, double step,
                                std::uint64_t seed);

// Gradient check of the full alignment objective on a small batch.
GradCheckReport finite_diff_check_alignment(AlignModel& model,
                                            const TrialSet& batch_ts,
                                            const EmbeddingProvider& provider,
                                            const AlignmentConfig& cfg,
                                            std::int64_t probes_per_tensor = 3,
                                            double step = 1e-5,
                                            std::uint64_t seed = 1);

}  // namespace neuvis
