#include "neuvis/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "neuvis/errors.hpp"
#include "neuvis/eval.hpp"

namespace neuvis {
namespace {

constexpr std::uint64_t kSaltValSplit = 101;
constexpr std::uint64_t kSaltShuffleBase = 20000;
constexpr std::uint64_t kSaltDropoutBase = 5000000;
constexpr std::uint64_t kSaltGradProbe = 777;

struct Collated {
  Mat signal;  // (B*C) x T
  Mat zv;      // B x d
  Mat zc;
  Mat zt;
  std::vector<std::int64_t> image_ids;
};

Collated collate(const TrialSet& ts, const std::vector<std::size_t>& indices,
                 const EmbeddingProvider& provider, const EncoderConfig& cfg) {
  Collated c;
  const auto b = static_cast<Eigen::Index>(indices.size());
  std::vector<const NeuralTrial*> batch;
  batch.reserve(indices.size());
  c.zv.resize(b, provider.dim());
  c.zc.resize(b, provider.dim());
  c.zt.resize(b, provider.dim());
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& trial = ts.trials[indices[static_cast<std::size_t>(i)]];
    batch.push_back(&trial);
    c.image_ids.push_back(trial.image_id);
    c.zv.row(i) = provider.image_embedding(trial.image_id).transpose();
    c.zc.row(i) =
        provider.coarse_text_embedding(provider.category_of(trial.image_id))
            .transpose();
    c.zt.row(i) = provider.fine_text_embedding(trial.image_id).transpose();
  }
  c.signal = stack_batch_signal(batch, cfg);
  return c;
}

nlohmann::json step_json(const StepRecord& r) {
  return {
      {"event", "step"},     {"epoch", r.epoch},
      {"step", r.step},      {"clip_v", r.loss.clip_v},
      {"clip_t1", r.loss.clip_t1}, {"clip_t2", r.loss.clip_t2},
      {"clip_t", r.loss.clip_t},   {"mse_v", r.loss.mse_v},
      {"mse_t", r.loss.mse_t},     {"total", r.loss.total},
      {"tau", r.tau},
  };
}

nlohmann::json epoch_json(const EpochRecord& r) {
  return {
      {"event", "val"},
      {"epoch", r.epoch},
      {"top1", r.val_top1},
      {"top5", r.val_top5},
      {"new_best", r.new_best},
  };
}

}  // namespace

void AlignmentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("alignment: alpha must lie in [0, 1]");
  if (beta < 0.0) throw ConfigError("alignment: beta must be nonnegative");
  if (!(lr >= 0.0)) throw ConfigError("alignment: lr must be nonnegative");
  if (epochs <= 0) throw ConfigError("alignment: epochs must be positive");
  if (batch_size <= 0)
    throw ConfigError("alignment: batch_size must be positive");
  if (!(tau_init > 0.0))
    throw ConfigError("alignment: tau_init must be positive");
  if (val_count <= 0)
    throw ConfigError("alignment: val_count must be positive");
}

KvList AlignmentConfig::to_kv() const {
  KvList kv;
  kv.emplace_back("alpha", format_double(alpha));
  kv.emplace_back("beta", format_double(beta));
  kv.emplace_back("lr", format_double(lr));
  kv.emplace_back("epochs", std::to_string(epochs));
  kv.emplace_back("batch_size", std::to_string(batch_size));
  kv.emplace_back("tau_init", format_double(tau_init));
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("val_count", std::to_string(val_count));
  return kv;
}

AlignmentConfig AlignmentConfig::from_kv(const KvList& kv) {
  AlignmentConfig c;
  c.alpha = parse_double(kv_get(kv, "alpha"));
  c.beta = parse_double(kv_get(kv, "beta"));
  c.lr = parse_double(kv_get(kv, "lr"));
  c.epochs = parse_int(kv_get(kv, "epochs"));
  c.batch_size = parse_int(kv_get(kv, "batch_size"));
  c.tau_init = parse_double(kv_get(kv, "tau_init"));
  c.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed")));
  c.val_count = parse_int(kv_get(kv, "val_count"));
  c.validate();
  return c;
}

AlignModel TrainState::best_model() const {
  if (!has_best) throw DataError("no best checkpoint recorded yet");
  return AlignModel::from_parts(model.config(), best_params);
}

void TrainState::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  KvList meta;
  for (const auto& [k, v] : cfg.to_kv()) meta.emplace_back("train." + k, v);
  meta.emplace_back("train.next_epoch", std::to_string(next_epoch));
  meta.emplace_back("train.has_best", has_best ? "true" : "false");
  meta.emplace_back("train.best_val_top1", format_double(best_val_top1));
  meta.emplace_back("train.best_epoch", std::to_string(best_epoch));
  model.save((std::filesystem::path(dir) / "model.nvt").string(), meta);
  if (has_best)
    best_params.save((std::filesystem::path(dir) / "best.nvt").string());
}

TrainState TrainState::load(const std::string& dir) {
  TrainState st;
  KvList meta;
  st.model =
      AlignModel::load((std::filesystem::path(dir) / "model.nvt").string(), &meta);
  KvList train_kv;
  for (const auto& [k, v] : meta)
    if (starts_with(k, "train.")) train_kv.emplace_back(k.substr(6), v);
  st.cfg = AlignmentConfig::from_kv(train_kv);
  st.next_epoch = parse_int(kv_get(train_kv, "next_epoch"));
  st.has_best = parse_bool(kv_get(train_kv, "has_best"));
  st.best_val_top1 = parse_double(kv_get(train_kv, "best_val_top1"));
  st.best_epoch = parse_int(kv_get(train_kv, "best_epoch"));
  if (st.has_best)
    st.best_params =
        ParamStore::load((std::filesystem::path(dir) / "best.nvt").string());
  return st;
}

TrainState init_train_state(const EncoderConfig& enc_cfg,
                            const AlignmentConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.model = AlignModel::init(enc_cfg);
  st.cfg = cfg;
  st.model.params().at("log_tau")(0, 0) = std::log(cfg.tau_init);
  return st;
}

std::pair<TrialSet, TrialSet> split_validation(const TrialSet& ts,
                                               std::int64_t val_count,
                                               std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(ts.trials.size());
  if (val_count <= 0) throw ConfigError("validation count must be positive");
  if (val_count >= n)
    throw ConfigError("validation count " + std::to_string(val_count) +
                      " must leave at least one training sample of " +
                      std::to_string(n));

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).fork(kSaltValSplit);
  rng.shuffle(order);

  std::vector<bool> in_val(static_cast<std::size_t>(n), false);
  for (std::int64_t i = 0; i < val_count; ++i)
    in_val[order[static_cast<std::size_t>(i)]] = true;

  TrialSet train = ts, val = ts;
  train.trials.clear();
  val.trials.clear();
  for (std::size_t i = 0; i < ts.trials.size(); ++i)
    (in_val[i] ? val : train).trials.push_back(ts.trials[i]);
  return {std::move(train), std::move(val)};
}

TrainState train_alignment(TrainState state, const TrialSet& train_ts,
                           const TrialSet& val_ts,
                           const EmbeddingProvider& provider,
                           const TrainOptions& opts) {
  state.cfg.validate();
  const AlignmentConfig& cfg = state.cfg;
  const EncoderConfig& enc = state.model.config();
  if (enc.embed_dim != provider.dim())
    throw ConfigError("model embed_dim does not match provider dimension");
  if (train_ts.trials.empty()) throw DataError("training set is empty");
  if (val_ts.trials.empty()) throw ConfigError("validation set is empty");

  const std::string provider_before = provider.fingerprint();

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path, std::ios::app);
    if (!log) throw DataError("cannot open training log: " + opts.log_path);
  }

  AdamConfig adam;
  adam.lr = cfg.lr;

  const auto n = train_ts.trials.size();
  std::vector<std::size_t> order(n);

  for (std::int64_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng =
        Rng(cfg.seed).fork(kSaltShuffleBase + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_rng =
        Rng(cfg.seed).fork(kSaltDropoutBase + static_cast<std::uint64_t>(epoch));

    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(start + count));
      Collated c = collate(train_ts, idx, provider, enc);

      Graph g;
      GraphBinder bind(g, state.model.params());
      const bool training = enc.dropout_rate > 0.0;
      auto feat = state.model.build_encode(g, bind, c.signal,
                                           static_cast<Eigen::Index>(count),
                                           training, &dropout_rng);
      auto zv_hat = state.model.build_project(g, bind, feat, "v");
      auto zs_hat = state.model.build_project(g, bind, feat, "t");
      auto nodes =
          build_overall_loss(g, zv_hat, zs_hat, c.zv, c.zc, c.zt,
                             state.model.build_tau(g, bind), cfg.alpha, cfg.beta);
      const LossBreakdown lb = read_losses(g, nodes);

      if (!std::isfinite(lb.total)) {
        std::string where = "epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(state.model.params().step() + 1);
        if (!opts.snapshot_dir.empty()) {
          std::filesystem::create_directories(opts.snapshot_dir);
          KvList meta;
          meta.emplace_back("diagnostic", "non-finite-loss");
          meta.emplace_back("where", where);
          std::vector<std::string> ids;
          for (auto id : c.image_ids) ids.push_back(std::to_string(id));
          meta.emplace_back("batch_image_ids", join(ids, ","));
          state.model.save(
              (std::filesystem::path(opts.snapshot_dir) / "diverged.nvt").string(),
              meta);
          where += "; diagnostics in " + opts.snapshot_dir;
        }
        throw NumericError("non-finite training loss at " + where);
      }

      state.model.params().zero_grads();
      g.backward(nodes.total);
      bind.accumulate_grads();
      state.model.params().adam_step(adam);

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = state.model.params().step();
      rec.loss = lb;
      rec.tau = state.model.tau();
      if (log) log << step_json(rec).dump() << '\n';
      if (opts.step_records) opts.step_records->push_back(rec);
    }

    auto val_report = validation_retrieval(state.model, val_ts, provider);
    EpochRecord er;
    er.epoch = epoch;
    er.val_top1 = val_report.top1;
    er.val_top5 = val_report.top5;
    er.new_best = !state.has_best || val_report.top1 >= state.best_val_top1;
    if (er.new_best) {
      state.has_best = true;
      state.best_val_top1 = val_report.top1;
      state.best_epoch = epoch;
      state.best_params = state.model.params();
    }
    if (log) log << epoch_json(er).dump() << '\n';
    if (opts.epoch_records) opts.epoch_records->push_back(er);

    state.next_epoch = epoch + 1;
  }

  if (provider.fingerprint() != provider_before)
    throw DataError("embedding provider changed during training");
  return state;
}

GradCheckReport check_gradients(ParamStore& params,
                                const std::function<double(bool)>& loss,
                                std::int64_t probes_per_tensor, double step,
                                std::uint64_t seed) {
  if (probes_per_tensor <= 0)
    throw ConfigError("probes_per_tensor must be positive");
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");

  params.zero_grads();
  loss(true);

  std::vector<Mat> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad);

  Rng rng = Rng(seed).fork(kSaltGradProbe);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.entries().size(); ++t) {
    auto& e = params.entries()[t];
    const auto size = static_cast<std::uint64_t>(e.value.size());
    const auto probes =
        std::min<std::uint64_t>(size, static_cast<std::uint64_t>(probes_per_tensor));
    for (std::uint64_t p = 0; p < probes; ++p) {
      const auto idx = static_cast<Eigen::Index>(rng.uniform_int(size));
      const double orig = e.value.data()[idx];

      e.value.data()[idx] = orig + step;
      const double fp = loss(false);
      e.value.data()[idx] = orig - step;
      const double fm = loss(false);
      e.value.data()[idx] = orig;

      GradProbe probe;
      probe.name = e.name;
      probe.index = idx;
      probe.analytic = analytic[t].data()[idx];
      probe.fd = (fp - fm) / (2.0 * step);
      probe.rel_err = std::abs(probe.analytic - probe.fd) /
                      std::max({std::abs(probe.analytic), std::abs(probe.fd), 1e-5});
      report.max_rel_err = std::max(report.max_rel_err, probe.rel_err);
      report.probes.push_back(std::move(probe));
    }
  }

  params.zero_grads();
  for (std::size_t t = 0; t < params.entries().size(); ++t)
    params.entries()[t].grad = analytic[t];
  return report;
}

GradCheckReport finite_diff_check_alignment(AlignModel& model,
                                            const TrialSet& batch_ts,
                                            const EmbeddingProvider& provider,
                                            const AlignmentConfig& cfg,
                                            std::int64_t probes_per_tensor,
                                            double step, std::uint64_t seed) {
  cfg.validate();
  if (batch_ts.trials.empty())
    throw DataError("gradient check needs a nonempty batch");

  std::vector<std::size_t> idx(batch_ts.trials.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Collated c = collate(batch_ts, idx, provider, model.config());
  const auto b = static_cast<Eigen::Index>(idx.size());

  auto loss = [&](bool with_grads) {
    Graph g;
    GraphBinder bind(g, model.params());
    auto feat = model.build_encode(g, bind, c.signal, b, false, nullptr);
    auto zv_hat = model.build_project(g, bind, feat, "v");
    auto zs_hat = model.build_project(g, bind, feat, "t");
    auto nodes = build_overall_loss(g, zv_hat, zs_hat, c.zv, c.zc, c.zt,
                                    model.build_tau(g, bind), cfg.alpha, cfg.beta);
    if (with_grads) {
      g.backward(nodes.total);
      bind.accumulate_grads();
    }
    return g.scalar(nodes.total);
  };

  return check_gradients(model.params(), loss, probes_per_tensor, step, seed);
}

}  // namespace neuvis
