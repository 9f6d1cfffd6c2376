#include "neuvis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

constexpr Eigen::Index kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;
constexpr double kSsimRange = 1.0;

std::string format_val(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Vec flatten(const Image& img) {
  return Eigen::Map<const Vec>(img.data.data(),
                               static_cast<Eigen::Index>(img.data.size()));
}

Mat ssim_kernel() {
  Mat k(kSsimWindow, kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (Eigen::Index y = 0; y < kSsimWindow; ++y)
    for (Eigen::Index x = 0; x < kSsimWindow; ++x) {
      const double dy = y - c, dx = x - c;
      k(y, x) = std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
      sum += k(y, x);
    }
  k /= sum;
  return k;
}

double pearson_rows(const Mat& a, Eigen::Index i, const Mat& b, Eigen::Index j) {
  Vec x = a.row(i).transpose();
  Vec y = b.row(j).transpose();
  return pearson(x, y);
}

}  // namespace

double pearson(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DataError("correlation needs equal-length vectors");
  if (a.size() < 2) throw DataError("correlation needs at least 2 values");
  const double ma = a.mean(), mb = b.mean();
  const Vec ca = a.array() - ma;
  const Vec cb = b.array() - mb;
  const double ssa = ca.squaredNorm(), ssb = cb.squaredNorm();
  if (ssa == 0.0 || ssb == 0.0)
    throw NumericError("correlation of a constant vector is undefined");
  return std::clamp(ca.dot(cb) / std::sqrt(ssa * ssb), -1.0, 1.0);
}

double pixcorr(const Image& gen, const Image& ref) {
  if (!gen.same_shape(ref)) throw DataError("pixcorr needs equal image shapes");
  return pearson(flatten(gen), flatten(ref));
}

double ssim(const Image& gen, const Image& ref) {
  if (!gen.same_shape(ref)) throw DataError("ssim needs equal image shapes");
  if (gen.height < kSsimWindow || gen.width < kSsimWindow)
    throw ConfigError("ssim needs images at least 11x11");

  static const Mat kernel = ssim_kernel();
  const Mat x = to_gray(gen);
  const Mat y = to_gray(ref);
  const double c1 = (kSsimK1 * kSsimRange) * (kSsimK1 * kSsimRange);
  const double c2 = (kSsimK2 * kSsimRange) * (kSsimK2 * kSsimRange);

  double total = 0.0;
  std::int64_t windows = 0;
  for (Eigen::Index oy = 0; oy + kSsimWindow <= x.rows(); ++oy) {
    for (Eigen::Index ox = 0; ox + kSsimWindow <= x.cols(); ++ox) {
      auto wx = x.block(oy, ox, kSsimWindow, kSsimWindow);
      auto wy = y.block(oy, ox, kSsimWindow, kSsimWindow);
      const double mx = (kernel.array() * wx.array()).sum();
      const double my = (kernel.array() * wy.array()).sum();
      const double vx = (kernel.array() * (wx.array() - mx).square()).sum();
      const double vy = (kernel.array() * (wy.array() - my).square()).sum();
      const double cov =
          (kernel.array() * (wx.array() - mx) * (wy.array() - my)).sum();
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double two_way_identification(const Mat& gen_features, const Mat& ref_features) {
  const Eigen::Index n = gen_features.rows();
  if (n != ref_features.rows() || gen_features.cols() != ref_features.cols())
    throw DataError("two-way identification needs aligned feature sets");
  if (n < 2)
    throw DataError("two-way identification needs at least 2 pairs");

  Mat corr(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      corr(i, j) = pearson_rows(gen_features, i, ref_features, j);

  std::int64_t wins = 0, comparisons = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (corr(i, i) > corr(i, j)) ++wins;
      ++comparisons;
    }
  return static_cast<double>(wins) / static_cast<double>(comparisons);
}

double feature_distance(const Mat& gen_features, const Mat& ref_features) {
  const Eigen::Index n = gen_features.rows();
  if (n != ref_features.rows() || gen_features.cols() != ref_features.cols())
    throw DataError("feature distance needs aligned feature sets");
  if (n < 1) throw DataError("feature distance needs at least 1 pair");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    total += 1.0 - pearson_rows(gen_features, i, ref_features, i);
  return total / static_cast<double>(n);
}

Mat FeatureExtractor::embed_all(const std::vector<Image>& images) const {
  if (images.empty()) throw DataError("no images to embed");
  Vec first = embed(images[0]);
  Mat out(static_cast<Eigen::Index>(images.size()), first.size());
  out.row(0) = first.transpose();
  for (std::size_t i = 1; i < images.size(); ++i) {
    Vec v = embed(images[i]);
    if (v.size() != first.size())
      throw DataError("extractor produced inconsistent widths");
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

RandomProjectionExtractor::RandomProjectionExtractor(std::uint64_t seed,
                                                     Eigen::Index out_dim,
                                                     Eigen::Index side)
    : seed_(seed), side_(side) {
  if (out_dim < 1 || side < 1)
    throw ConfigError("random projection needs positive dimensions");
  Rng rng(seed);
  projection_ = rng.gaussian_mat(side * side, out_dim,
                                 1.0 / std::sqrt(static_cast<double>(side * side)));
}

std::string RandomProjectionExtractor::name() const {
  return "randproj-s" + std::to_string(seed_) + "-d" +
         std::to_string(projection_.cols());
}

std::string RandomProjectionExtractor::fingerprint() const {
  Hasher h;
  h.str("randproj").u64(seed_).i64(side_).i64(projection_.cols());
  return hex64(h.digest());
}

Vec RandomProjectionExtractor::embed(const Image& img) const {
  Mat gray = to_gray(resize_bilinear(img, side_, side_));
  Eigen::RowVectorXd flat(side_ * side_);
  for (Eigen::Index y = 0; y < side_; ++y)
    flat.segment(y * side_, side_) = gray.row(y);
  return (flat * projection_).transpose();
}

RankedCandidates rank_generations(const std::vector<Image>& candidates,
                                  const Image& reference,
                                  const FeatureExtractor& extractor,
                                  std::size_t expected_count) {
  if (expected_count < 1)
    throw ConfigError("ranking needs a positive candidate count");
  if (candidates.size() != expected_count)
    throw DataError("ranking expects exactly " + std::to_string(expected_count) +
                    " candidates, got " + std::to_string(candidates.size()));

  Vec ref = extractor.embed(reference);
  RankedCandidates rc;
  rc.similarity.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Vec c = extractor.embed(candidates[i]);
    rc.similarity[i] = pearson(c, ref);
  }
  rc.order.resize(candidates.size());
  std::iota(rc.order.begin(), rc.order.end(), std::size_t{0});
  std::stable_sort(rc.order.begin(), rc.order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return rc.similarity[a] > rc.similarity[b];
                   });
  return rc;
}

std::string MetricReport::tsv() const {
  std::string head = "PixCorr\tSSIM";
  std::string row = format_val(pixcorr_mean) + "\t" + format_val(ssim_mean);
  for (const auto& f : features) {
    head += "\t" + f.name + ":two-way\t" + f.name + ":distance";
    row += "\t" + format_val(f.two_way) + "\t" + format_val(f.distance);
  }
  return head + "\n" + row + "\n";
}

std::string MetricReport::per_pair_dump() const {
  std::string out = "pair\tpixcorr\tssim\n";
  for (std::size_t i = 0; i < pixcorr_per_pair.size(); ++i)
    out += std::to_string(i) + "\t" + format_val(pixcorr_per_pair[i]) + "\t" +
           format_val(ssim_per_pair[i]) + "\n";
  return out;
}

MetricReport compute_metrics(const std::vector<Image>& generated,
                             const std::vector<Image>& reference,
                             const std::vector<const FeatureExtractor*>& extractors) {
  if (generated.size() != reference.size())
    throw DataError("metric suite needs aligned image sets (" +
                    std::to_string(generated.size()) + " generated vs " +
                    std::to_string(reference.size()) + " reference)");
  if (generated.empty()) throw DataError("metric suite needs at least 1 pair");

  MetricReport r;
  r.n_pairs = static_cast<std::int64_t>(generated.size());
  for (std::size_t i = 0; i < generated.size(); ++i) {
    r.pixcorr_per_pair.push_back(pixcorr(generated[i], reference[i]));
    r.ssim_per_pair.push_back(ssim(generated[i], reference[i]));
  }
  r.pixcorr_mean =
      std::accumulate(r.pixcorr_per_pair.begin(), r.pixcorr_per_pair.end(), 0.0) /
      static_cast<double>(r.n_pairs);
  r.ssim_mean =
      std::accumulate(r.ssim_per_pair.begin(), r.ssim_per_pair.end(), 0.0) /
      static_cast<double>(r.n_pairs);

  if (!extractors.empty() && generated.size() < 2)
    throw DataError("feature metrics need at least 2 pairs");
  for (const FeatureExtractor* ex : extractors) {
    if (!ex) throw ConfigError("null feature extractor");
    Mat gf = ex->embed_all(generated);
    Mat rf = ex->embed_all(reference);
    ExtractorScores s;
    s.name = ex->name();
    s.fingerprint = ex->fingerprint();
    s.two_way = two_way_identification(gf, rf);
    s.distance = feature_distance(gf, rf);
    r.features.push_back(std::move(s));
  }
  return r;
}

}  // namespace neuvis
