#include "neuvis/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

// reflect index into [0, n) without repeating the edge sample
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_subject_image(
    const TrialSet& ts) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  for (std::size_t i = 0; i < ts.trials.size(); ++i) {
    const auto& t = ts.trials[i];
    auto key = std::make_pair(t.subject_id, t.image_id);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.emplace_back(t.subject_id + "/" + std::to_string(t.image_id),
                          std::vector<std::size_t>{i});
    } else {
      groups[it->second].second.push_back(i);
    }
  }
  return groups;
}

}  // namespace

std::vector<double> lowpass_kernel(double cutoff_hz, double rate_hz,
                                   int half_width) {
  const double fc = cutoff_hz / rate_hz;  // cycles per sample
  const int n = 2 * half_width + 1;
  std::vector<double> h(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const int m = i - half_width;
    const double x = 2.0 * std::numbers::pi * fc * m;
    const double sinc = (m == 0) ? 2.0 * fc : std::sin(x) / (std::numbers::pi * m);
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    h[static_cast<std::size_t>(i)] = sinc * window;
    sum += h[static_cast<std::size_t>(i)];
  }
  for (auto& v : h) v /= sum;  // exact DC preservation
  return h;
}

NeuralTrial downsample(const NeuralTrial& trial, double target_rate_hz) {
  if (target_rate_hz <= 0.0) throw ConfigError("target rate must be positive");
  const double source = trial.sample_rate_hz;
  if (target_rate_hz > source)
    throw DataError("cannot downsample: target rate exceeds source rate");
  const double ratio = source / target_rate_hz;
  const auto factor = static_cast<Eigen::Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(factor)) > 1e-9)
    throw DataError("unsupported rate: source/target must be an integer factor");
  if (factor == 1) return trial;

  const Eigen::Index c = trial.signal.rows();
  const Eigen::Index t = trial.signal.cols();
  const auto half = static_cast<int>(std::min<Eigen::Index>(10 * factor, t - 1));
  const auto kernel = lowpass_kernel(0.4 * target_rate_hz, source, half);

  Mat filtered(c, t);
  for (Eigen::Index r = 0; r < c; ++r) {
    for (Eigen::Index s = 0; s < t; ++s) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k)
        acc += kernel[static_cast<std::size_t>(k + half)] *
               static_cast<double>(trial.signal(r, reflect_index(s + k, t)));
      filtered(r, s) = acc;
    }
  }

  const Eigen::Index t_out = t / factor;
  NeuralTrial out = trial;
  out.sample_rate_hz = target_rate_hz;
  out.signal.resize(c, t_out);
  for (Eigen::Index r = 0; r < c; ++r)
    for (Eigen::Index s = 0; s < t_out; ++s)
      out.signal(r, s) = static_cast<float>(filtered(r, s * factor));
  return out;
}

TrialSet downsample(const TrialSet& ts, double target_rate_hz) {
  TrialSet out = ts;
  for (auto& t : out.trials) t = downsample(t, target_rate_hz);
  return out;
}

NeuralTrial crop_time_window(const NeuralTrial& trial, double start_ms,
                             double end_ms) {
  const double fs = trial.sample_rate_hz;
  const Eigen::Index t = trial.signal.cols();
  const double duration_ms = static_cast<double>(t) * 1000.0 / fs;
  if (!(0.0 <= start_ms && start_ms < end_ms && end_ms <= duration_ms + 1e-9))
    throw DataError("time window out of range");
  const auto start = static_cast<Eigen::Index>(std::floor(start_ms * fs / 1000.0));
  auto end = static_cast<Eigen::Index>(std::floor(end_ms * fs / 1000.0));
  end = std::min(end, t);
  if (end <= start) throw DataError("time window selects no samples");

  NeuralTrial out = trial;
  out.signal = trial.signal.middleCols(start, end - start).eval();
  out.t0_ms = trial.t0_ms + static_cast<double>(start) * 1000.0 / fs;
  return out;
}

TrialSet crop_time_window(const TrialSet& ts, double start_ms, double end_ms) {
  TrialSet out = ts;
  for (auto& t : out.trials) t = crop_time_window(t, start_ms, end_ms);
  return out;
}

NeuralTrial average_group(const std::vector<const NeuralTrial*>& reps) {
  if (reps.empty()) throw DataError("cannot average an empty repetition group");
  const Eigen::Index c = reps.front()->signal.rows();
  const Eigen::Index t = reps.front()->signal.cols();
  Mat acc = Mat::Zero(c, t);
  for (const auto* r : reps) {
    if (r->signal.rows() != c || r->signal.cols() != t)
      throw DataError("ragged repetition group for image " +
                      std::to_string(reps.front()->image_id));
    acc += r->signal.cast<double>();
  }
  acc /= static_cast<double>(reps.size());
  NeuralTrial out = *reps.front();
  out.repetition = 0;
  out.signal = acc.cast<float>();
  return out;
}

TrialSet average_repetitions(const TrialSet& ts) {
  TrialSet out = ts;
  out.trials.clear();
  for (const auto& [key, indices] : group_by_subject_image(ts)) {
    std::vector<const NeuralTrial*> reps;
    for (auto i : indices) reps.push_back(&ts.trials[i]);
    for (const auto* r : reps)
      if (r->category_id != reps.front()->category_id)
        throw DataError("repetition group mixes categories at " + key);
    out.trials.push_back(average_group(reps));
  }
  return out;
}

TrialSet select_channels(const TrialSet& ts,
                         const std::vector<std::string>& regions,
                         const ChannelGroupMap& map) {
  std::vector<bool> keep(ts.channel_names.size(), false);
  for (const auto& region : regions) {
    const auto* chans = map.find(region);
    if (!chans) throw ConfigError("unknown channel region: " + region);
    for (const auto& name : *chans) {
      auto it = std::find(ts.channel_names.begin(), ts.channel_names.end(), name);
      if (it == ts.channel_names.end())
        throw DataError("channel " + name + " from region " + region +
                        " not present in trial set");
      keep[static_cast<std::size_t>(it - ts.channel_names.begin())] = true;
    }
  }
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(static_cast<Eigen::Index>(i));
  if (rows.empty()) throw DataError("channel selection is empty");

  TrialSet out = ts;
  out.channel_names.clear();
  for (auto r : rows) out.channel_names.push_back(ts.channel_names[static_cast<std::size_t>(r)]);
  for (auto& trial : out.trials) {
    MatF sel(static_cast<Eigen::Index>(rows.size()), trial.signal.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      sel.row(static_cast<Eigen::Index>(i)) = trial.signal.row(rows[i]);
    trial.signal = std::move(sel);
  }
  return out;
}

NeuralTrial baseline_correct(const NeuralTrial& trial, MsInterval interval) {
  if (interval.start_ms >= interval.end_ms)
    throw ConfigError("baseline interval must have start < end");
  const double fs = trial.sample_rate_hz;
  std::vector<Eigen::Index> cols;
  for (Eigen::Index s = 0; s < trial.signal.cols(); ++s) {
    const double t_ms = trial.t0_ms + static_cast<double>(s) * 1000.0 / fs;
    if (t_ms >= interval.start_ms && t_ms < interval.end_ms) cols.push_back(s);
  }
  if (cols.empty())
    throw DataError("baseline interval selects no samples");
  NeuralTrial out = trial;
  for (Eigen::Index r = 0; r < trial.signal.rows(); ++r) {
    double mean = 0.0;
    for (auto s : cols) mean += static_cast<double>(trial.signal(r, s));
    mean /= static_cast<double>(cols.size());
    for (Eigen::Index s = 0; s < trial.signal.cols(); ++s)
      out.signal(r, s) = static_cast<float>(static_cast<double>(trial.signal(r, s)) - mean);
  }
  return out;
}

NeuralTrial Whitener::apply(const NeuralTrial& trial) const {
  if (matrix.rows() != trial.signal.rows())
    throw DataError("whitener channel count does not match trial");
  NeuralTrial out = trial;
  out.signal = (matrix * trial.signal.cast<double>()).cast<float>();
  return out;
}

TrialSet Whitener::apply(const TrialSet& ts) const {
  TrialSet out = ts;
  for (auto& t : out.trials) t = apply(t);
  return out;
}

Whitener fit_whitener(const TrialSet& train, double shrinkage) {
  const Eigen::Index c = train.channels();
  const Eigen::Index t = train.samples();
  Mat cov = Mat::Zero(c, c);
  std::size_t n_groups = 0;

  for (const auto& [key, indices] : group_by_subject_image(train)) {
    if (indices.size() < 2) continue;
    Mat mean = Mat::Zero(c, t);
    for (auto i : indices) mean += train.trials[i].signal.cast<double>();
    mean /= static_cast<double>(indices.size());

    Mat group_cov = Mat::Zero(c, c);
    for (auto i : indices) {
      Mat resid = train.trials[i].signal.cast<double>() - mean;
      // accumulate per-time-point outer products, then average over time
      group_cov += resid * resid.transpose();
    }
    group_cov /= static_cast<double>((indices.size() - 1) * static_cast<std::size_t>(t));
    cov += group_cov;
    ++n_groups;
  }
  if (n_groups == 0)
    throw DataError("noise normalization needs at least one image with >= 2 repetitions");
  cov /= static_cast<double>(n_groups);

  Mat shrunk = (1.0 - shrinkage) * cov +
               shrinkage * Mat(cov.diagonal().asDiagonal());

  Eigen::SelfAdjointEigenSolver<Mat> eig(shrunk);
  if (eig.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed while fitting whitener");
  Vec evals = eig.eigenvalues();
  if (evals.maxCoeff() <= 0.0)
    throw NumericError(
        "residual covariance has no positive variance; repetitions are "
        "identical so there is no noise to normalize");
  const double floor = std::max(evals.maxCoeff() * 1e-12, 1e-300);
  bool regularized = false;
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals[i] < floor) {
      evals[i] = floor;
      regularized = true;
    }
  }
  Mat inv_sqrt = eig.eigenvectors() *
                 evals.cwiseSqrt().cwiseInverse().asDiagonal() *
                 eig.eigenvectors().transpose();

  Whitener w;
  w.matrix = inv_sqrt;
  w.covariance = shrunk;
  w.regularized = regularized;
  return w;
}

NoiseNormalizeResult noise_normalize(const TrialSet& train) {
  Whitener w = fit_whitener(train);
  return {w.apply(train), std::move(w)};
}

PreprocessResult preprocess_trialset(const TrialSet& ts,
                                     const PreprocessConfig& cfg,
                                     const Whitener* reuse) {
  if (cfg.window_start_ms >= cfg.window_end_ms)
    throw ConfigError("analysis window must have start < end");

  TrialSet cur = ts;
  if (cfg.target_rate_hz < cur.sample_rate_hz())
    cur = downsample(cur, cfg.target_rate_hz);
  else if (cfg.target_rate_hz > cur.sample_rate_hz())
    throw ConfigError("target rate exceeds source rate");

  std::optional<MsInterval> baseline = cfg.baseline_ms;
  const double t0 = cur.trials.front().t0_ms;
  if (!baseline && cfg.baseline_auto && t0 < 0.0)
    baseline = MsInterval{std::max(t0, -100.0), 0.0};
  if (baseline)
    for (auto& t : cur.trials) t = baseline_correct(t, *baseline);

  // analysis window is onset-relative; crop takes trial-relative offsets
  cur = crop_time_window(cur, cfg.window_start_ms - t0, cfg.window_end_ms - t0);

  PreprocessResult result;
  if (reuse) {
    cur = reuse->apply(cur);
    result.whitener = *reuse;
  } else if (cfg.noise_normalize) {
    auto nn = noise_normalize(cur);
    cur = std::move(nn.ts);
    result.whitener = std::move(nn.whitener);
  }

  if (cfg.average_repetitions) cur = average_repetitions(cur);

  result.ts = std::move(cur);
  return result;
}

}  // namespace neuvis
