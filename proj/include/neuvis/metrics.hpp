#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/image.hpp"

namespace neuvis {

// Pearson correlation of two equal-length vectors, clamped to [-1, 1] so
// rounding can never push downstream scores out of range.
// A constant vector has no defined correlation and raises NumericError.
double pearson(const Vec& a, const Vec& b);

// Correlation of flattened RGB values; images must share a shape.
double pixcorr(const Image& gen, const Image& ref);

// Mean local SSIM over valid windows of the luma channel.
// Gaussian window 11x11 sigma 1.5, K1=0.01, K2=0.03, dynamic range 1.
double ssim(const Image& gen, const Image& ref);

// Rows are index-aligned feature vectors, one per image.
// Fraction of (i, j != i) with corr(gen_i, ref_i) > corr(gen_i, ref_j).
// Asymmetric in (gen, ref) by construction. Needs at least 2 rows.
double two_way_identification(const Mat& gen_features, const Mat& ref_features);

// Mean correlation distance (1 - Pearson) across aligned rows.
double feature_distance(const Mat& gen_features, const Mat& ref_features);

// Deterministic image -> vector embedding, identified by fingerprint.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::string fingerprint() const = 0;
  virtual Vec embed(const Image& img) const = 0;

  // Stacks embeddings as rows.
  Mat embed_all(const std::vector<Image>& images) const;
};

// Hermetic stand-in for pretrained networks: luma at a fixed resolution
// through a seeded random projection. Deterministic per (seed, dims).
class RandomProjectionExtractor : public FeatureExtractor {
 public:
  RandomProjectionExtractor(std::uint64_t seed, Eigen::Index out_dim = 64,
                            Eigen::Index side = 16);
  std::string name() const override;
  std::string fingerprint() const override;
  Vec embed(const Image& img) const override;

 private:
  std::uint64_t seed_;
  Eigen::Index side_;
  Mat projection_;  // (side*side) x out_dim
};

// Candidate indices ordered by descending feature correlation with the
// reference, plus the correlation per candidate (input order).
struct RankedCandidates {
  std::vector<std::size_t> order;
  std::vector<double> similarity;
};

// Enforces the configured candidate count (the reconstruction protocol
// generates a fixed number per stimulus and ranks them).
RankedCandidates rank_generations(const std::vector<Image>& candidates,
                                  const Image& reference,
                                  const FeatureExtractor& extractor,
                                  std::size_t expected_count = 10);

struct ExtractorScores {
  std::string name;
  std::string fingerprint;
  double two_way = 0.0;
  double distance = 0.0;
};

struct MetricReport {
  std::int64_t n_pairs = 0;
  double pixcorr_mean = 0.0;
  double ssim_mean = 0.0;
  std::vector<double> pixcorr_per_pair;
  std::vector<double> ssim_per_pair;
  std::vector<ExtractorScores> features;

  // Single-row table: PixCorr, SSIM, then <name>:two-way and <name>:distance
  // per extractor (both are computed and labeled explicitly).
  std::string tsv() const;
  // Line-delimited per-pair dump: index, pixcorr, ssim.
  std::string per_pair_dump() const;
};

// Full suite over aligned image lists. Extractor metrics need >= 2 pairs.
MetricReport compute_metrics(const std::vector<Image>& generated,
                             const std::vector<Image>& reference,
                             const std::vector<const FeatureExtractor*>& extractors);

}  // namespace neuvis
