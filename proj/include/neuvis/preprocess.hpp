#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neuvis/types.hpp"

namespace neuvis {

// Fitted multivariate noise-normalization transform: per-time-point residual
// covariance across repetitions, averaged over time, shrunk toward its
// diagonal, then inverted through a matrix square root.
struct Whitener {
  Mat matrix;      // C x C, applied as matrix * signal
  Mat covariance;  // the shrunk covariance the matrix inverts
  bool regularized = false;  // eigenvalue floor was needed

  NeuralTrial apply(const NeuralTrial& trial) const;
  TrialSet apply(const TrialSet& ts) const;
};

NeuralTrial average_group(const std::vector<const NeuralTrial*>& reps);
TrialSet average_repetitions(const TrialSet& ts);

NeuralTrial downsample(const NeuralTrial& trial, double target_rate_hz);
TrialSet downsample(const TrialSet& ts, double target_rate_hz);

// start_ms/end_ms are offsets from the first sample; [start, end) half-open
NeuralTrial crop_time_window(const NeuralTrial& trial, double start_ms,
                             double end_ms);
TrialSet crop_time_window(const TrialSet& ts, double start_ms, double end_ms);

TrialSet select_channels(const TrialSet& ts,
                         const std::vector<std::string>& regions,
                         const ChannelGroupMap& map);

NeuralTrial baseline_correct(const NeuralTrial& trial, MsInterval interval);

Whitener fit_whitener(const TrialSet& train, double shrinkage = 0.1);

struct NoiseNormalizeResult {
  TrialSet ts;
  Whitener whitener;
};
NoiseNormalizeResult noise_normalize(const TrialSet& train);

// Full pipeline: downsample, baseline-correct, crop to the analysis window
// (onset-relative), optionally whiten, optionally average repetitions.
// When `reuse` is given the whitener is applied instead of fitted.
struct PreprocessResult {
  TrialSet ts;
  std::optional<Whitener> whitener;
};
PreprocessResult preprocess_trialset(const TrialSet& ts,
                                     const PreprocessConfig& cfg,
                                     const Whitener* reuse = nullptr);

// Windowed-sinc low-pass kernel (Hamming window), normalized to unit sum.
std::vector<double> lowpass_kernel(double cutoff_hz, double rate_hz,
                                   int half_width);

}  // namespace neuvis
