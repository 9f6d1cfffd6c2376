#include "neuvis/prior.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

constexpr std::uint64_t kSaltShuffleBase = 50000;
constexpr std::uint64_t kSaltNoiseBase = 60000;
constexpr std::uint64_t kSaltPredict = 0x70726472ull;  // start-vector stream

Mat gelu_mat(Mat x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = gelu_value(x(i, j));
  return x;
}

std::uint64_t row_hash(const Mat& m, Eigen::Index row) {
  Hasher h;
  for (Eigen::Index j = 0; j < m.cols(); ++j) h.f64(m(row, j));
  return h.digest();
}

}  // namespace

const char* prior_mode_name(PriorMode m) {
  switch (m) {
    case PriorMode::mlp_direct: return "mlp_direct";
    case PriorMode::denoising: return "denoising";
  }
  throw ConfigError("unknown prior mode");
}

PriorMode prior_mode_from_name(const std::string& s) {
  if (s == "mlp_direct") return PriorMode::mlp_direct;
  if (s == "denoising") return PriorMode::denoising;
  throw ConfigError("unknown prior mode: " + s);
}

const char* schedule_name(NoiseSchedule s) {
  switch (s) {
    case NoiseSchedule::linear: return "linear";
    case NoiseSchedule::zero: return "zero";
  }
  throw ConfigError("unknown noise schedule");
}

NoiseSchedule schedule_from_name(const std::string& s) {
  if (s == "linear") return NoiseSchedule::linear;
  if (s == "zero") return NoiseSchedule::zero;
  throw ConfigError("unknown noise schedule: " + s);
}

void PriorConfig::validate() const {
  if (dim < 1) throw ConfigError("prior: dim must be at least 1");
  if (hidden_dim < 1) throw ConfigError("prior: hidden_dim must be at least 1");
  if (mode == PriorMode::denoising && n_steps < 1)
    throw ConfigError("prior: denoising mode needs n_steps >= 1");
}

double PriorConfig::alpha_bar(std::int64_t t) const {
  if (t <= 0) return 1.0;
  if (schedule == NoiseSchedule::zero) return 0.0;
  return 1.0 - static_cast<double>(t) / static_cast<double>(n_steps);
}

Eigen::Index PriorConfig::input_dim() const {
  return mode == PriorMode::mlp_direct ? dim : 2 * dim + kPriorTimeEmbedDim;
}

KvList PriorConfig::to_kv() const {
  KvList kv;
  kv.emplace_back("mode", prior_mode_name(mode));
  kv.emplace_back("dim", std::to_string(dim));
  kv.emplace_back("hidden_dim", std::to_string(hidden_dim));
  kv.emplace_back("n_steps", std::to_string(n_steps));
  kv.emplace_back("schedule", schedule_name(schedule));
  kv.emplace_back("seed", std::to_string(seed));
  return kv;
}

PriorConfig PriorConfig::from_kv(const KvList& kv) {
  PriorConfig c;
  c.mode = prior_mode_from_name(kv_get(kv, "mode"));
  c.dim = parse_int(kv_get(kv, "dim"));
  c.hidden_dim = parse_int(kv_get(kv, "hidden_dim"));
  c.n_steps = parse_int(kv_get(kv, "n_steps"));
  c.schedule = schedule_from_name(kv_get(kv, "schedule"));
  c.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed")));
  c.validate();
  return c;
}

Eigen::RowVectorXd prior_time_embedding(std::int64_t t) {
  Eigen::RowVectorXd e(kPriorTimeEmbedDim);
  const Eigen::Index half = kPriorTimeEmbedDim / 2;
  for (Eigen::Index k = 0; k < half; ++k) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    e(2 * k) = std::sin(static_cast<double>(t) * freq);
    e(2 * k + 1) = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

DiffusionPrior DiffusionPrior::init(const PriorConfig& cfg) {
  cfg.validate();
  DiffusionPrior p;
  p.cfg_ = cfg;
  Rng rng(cfg.seed);
  auto& ps = p.params_;
  ps.add("w1", glorot_init(rng, cfg.input_dim(), cfg.hidden_dim));
  ps.add("b1", Mat::Zero(1, cfg.hidden_dim));
  ps.add("w2", glorot_init(rng, cfg.hidden_dim, cfg.hidden_dim));
  ps.add("b2", Mat::Zero(1, cfg.hidden_dim));
  ps.add("w3", glorot_init(rng, cfg.hidden_dim, cfg.dim));
  ps.add("b3", Mat::Zero(1, cfg.dim));
  return p;
}

DiffusionPrior DiffusionPrior::from_parts(const PriorConfig& cfg,
                                          ParamStore params) {
  cfg.validate();
  if (!params.has("w1") || !params.has("b3"))
    throw DataError("parameter store does not hold a prior network");
  DiffusionPrior p;
  p.cfg_ = cfg;
  p.params_ = std::move(params);
  return p;
}

Graph::Id DiffusionPrior::build_net(Graph& g, GraphBinder& bind,
                                    const Mat& input) const {
  if (input.cols() != cfg_.input_dim())
    throw DataError("prior net input width does not match config");
  Graph::Id x = g.leaf(input);
  Graph::Id h1 = g.gelu(g.add_rowvec(g.matmul(x, bind("w1")), bind("b1")));
  Graph::Id h2 = g.gelu(g.add_rowvec(g.matmul(h1, bind("w2")), bind("b2")));
  return g.add_rowvec(g.matmul(h2, bind("w3")), bind("b3"));
}

Mat DiffusionPrior::net_value(const Mat& input) const {
  if (input.cols() != cfg_.input_dim())
    throw DataError("prior net input width does not match config");
  const auto& p = params_;
  Mat h1 = gelu_mat((input * p.at("w1")).rowwise() + p.at("b1").row(0));
  Mat h2 = gelu_mat((h1 * p.at("w2")).rowwise() + p.at("b2").row(0));
  return (h2 * p.at("w3")).rowwise() + p.at("b3").row(0);
}

Mat DiffusionPrior::predict(const Mat& zv_hat) const {
  if (zv_hat.cols() != cfg_.dim)
    throw DataError("prior input width does not match config");
  if (cfg_.mode == PriorMode::mlp_direct) return net_value(zv_hat);

  const Eigen::Index batch = zv_hat.rows();
  const Eigen::Index d = cfg_.dim;

  // Deterministic start: seeded from the config seed and the input bytes.
  Mat y(batch, d);
  if (cfg_.schedule == NoiseSchedule::zero) {
    y.setZero();
  } else {
    for (Eigen::Index i = 0; i < batch; ++i) {
      Rng rng = Rng(cfg_.seed ^ row_hash(zv_hat, i)).fork(kSaltPredict);
      for (Eigen::Index j = 0; j < d; ++j) y(i, j) = rng.gaussian();
    }
  }

  for (std::int64_t t = cfg_.n_steps; t >= 1; --t) {
    Mat input(batch, cfg_.input_dim());
    input.leftCols(d) = y;
    input.middleCols(d, d) = zv_hat;
    input.rightCols(kPriorTimeEmbedDim) =
        prior_time_embedding(t).replicate(batch, 1);
    Mat x0 = net_value(input);

    const double ab_t = cfg_.alpha_bar(t);
    const double ab_prev = cfg_.alpha_bar(t - 1);
    if (ab_t >= 1.0 - 1e-12) {
      y = x0;
      continue;
    }
    Mat eps = (y - std::sqrt(ab_t) * x0) / std::sqrt(1.0 - ab_t);
    y = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
  }
  return y;
}

void DiffusionPrior::save(const std::string& path,
                          const KvList& extra_meta) const {
  KvList meta;
  meta.emplace_back("model", "prior-v1");
  for (const auto& [key, val] : cfg_.to_kv()) meta.emplace_back("cfg." + key, val);
  for (const auto& [key, val] : extra_meta) meta.emplace_back(key, val);
  params_.save(path, meta);
}

DiffusionPrior DiffusionPrior::load(const std::string& path, KvList* meta_out) {
  KvList meta;
  ParamStore ps = ParamStore::load(path, &meta);
  if (kv_get(meta, "model") != "prior-v1")
    throw DataError("checkpoint is not a prior network: " + path);
  KvList cfg_kv;
  for (const auto& [key, val] : meta)
    if (starts_with(key, "cfg.")) cfg_kv.emplace_back(key.substr(4), val);
  DiffusionPrior p;
  p.cfg_ = PriorConfig::from_kv(cfg_kv);
  p.params_ = std::move(ps);
  if (meta_out) *meta_out = std::move(meta);
  return p;
}

void PriorTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("prior training: epochs must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("prior training: lr must be >= 0");
  if (batch_size < 1)
    throw ConfigError("prior training: batch_size must be >= 1");
}

DiffusionPrior train_prior(const PriorConfig& cfg, const Mat& zv_hat,
                           const Mat& z_v, const PriorTrainConfig& tc) {
  cfg.validate();
  tc.validate();
  const Eigen::Index n = zv_hat.rows();
  if (n == 0) throw DataError("prior training set is empty");
  if (z_v.rows() != n || zv_hat.cols() != cfg.dim || z_v.cols() != cfg.dim)
    throw DataError("prior training pairs do not match the configured dim");

  DiffusionPrior prior = DiffusionPrior::init(cfg);
  AdamConfig adam;
  adam.lr = tc.lr;
  const Eigen::Index d = cfg.dim;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (std::int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng =
        Rng(tc.seed).fork(kSaltShuffleBase + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng noise_rng =
        Rng(tc.seed).fork(kSaltNoiseBase + static_cast<std::uint64_t>(epoch));

    for (Eigen::Index begin = 0; begin < n; begin += tc.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(tc.batch_size, n - begin);
      Mat cond(count, d), target(count, d);
      for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(begin + i)];
        cond.row(i) = zv_hat.row(src);
        target.row(i) = z_v.row(src);
      }

      Mat input;
      if (cfg.mode == PriorMode::mlp_direct) {
        input = cond;
      } else {
        input.resize(count, cfg.input_dim());
        for (Eigen::Index i = 0; i < count; ++i) {
          const std::int64_t t = static_cast<std::int64_t>(
              noise_rng.uniform_int(static_cast<std::uint64_t>(cfg.n_steps))) + 1;
          const double ab = cfg.alpha_bar(t);
          Eigen::RowVectorXd eps(d);
          for (Eigen::Index j = 0; j < d; ++j) eps(j) = noise_rng.gaussian();
          if (cfg.schedule == NoiseSchedule::zero) eps.setZero();
          input.row(i).head(d) =
              std::sqrt(ab) * target.row(i) + std::sqrt(1.0 - ab) * eps;
          input.row(i).segment(d, d) = cond.row(i);
          input.row(i).tail(kPriorTimeEmbedDim) = prior_time_embedding(t);
        }
      }

      Graph g;
      GraphBinder bind(g, prior.params());
      Graph::Id out = prior.build_net(g, bind, input);
      Graph::Id loss = g.mean_all(g.square(g.sub(out, g.leaf(target))));
      if (!std::isfinite(g.scalar(loss)))
        throw NumericError("prior training loss is not finite");
      prior.params().zero_grads();
      g.backward(loss);
      bind.accumulate_grads();
      prior.params().adam_step(adam);
    }
  }
  return prior;
}

double prior_mse(const DiffusionPrior& prior, const Mat& zv_hat,
                 const Mat& z_v) {
  if (zv_hat.rows() != z_v.rows() || zv_hat.cols() != z_v.cols())
    throw DataError("prior evaluation pairs do not match");
  Mat pred = prior.predict(zv_hat);
  const double mse = (pred - z_v).array().square().mean();
  if (!std::isfinite(mse))
    throw NumericError("prior evaluation produced a non-finite error");
  return mse;
}

}  // namespace neuvis
