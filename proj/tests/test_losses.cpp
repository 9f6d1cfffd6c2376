#include <doctest.h>

#include <cmath>

#include "neuvis/errors.hpp"
#include "neuvis/losses.hpp"

using namespace neuvis;

namespace {

Mat rows2(double a0, double a1, double b0, double b1) {
  Mat m(2, 2);
  m << a0, a1, b0, b1;
  return m;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("contrastive loss closed-form oracles") {
  // A single pair scores itself against itself only: loss is exactly 0.
  Mat one(1, 3);
  one << 0.2, -0.7, 1.1;
  CHECK(contrastive_loss(one, one, 0.07) == 0.0);

  // Identical rows: uniform softmax, loss = ln(B) for any tau.
  for (int b : {2, 3, 5}) {
    Mat m(b, 4);
    for (int i = 0; i < b; ++i) m.row(i) << 1.0, 2.0, 3.0, 4.0;
    CHECK(contrastive_loss(m, m, 0.07) ==
          doctest::Approx(std::log(static_cast<double>(b))).epsilon(1e-12));
    CHECK(contrastive_loss(m, m, 1.0) ==
          doctest::Approx(std::log(static_cast<double>(b))).epsilon(1e-12));
  }

  // Orthonormal rows at tau = 1: loss = ln(1 + (B-1) e^{-1}).
  Mat eye2 = Mat::Identity(2, 2);
  CHECK(contrastive_loss(eye2, eye2, 1.0) ==
        doctest::Approx(0.313261687518).epsilon(1e-12));
  Mat eye3 = Mat::Identity(3, 3);
  CHECK(contrastive_loss(eye3, eye3, 1.0) ==
        doctest::Approx(std::log(1.0 + 2.0 * std::exp(-1.0))).epsilon(1e-12));

  // Hand-computed asymmetric 2x2 case.
  Mat anchors = rows2(1.0, 0.0, 0.6, 0.8);
  Mat targets = rows2(1.0, 0.0, 0.0, 1.0);
  // cosine rows: s = [[1, 0], [0.6, 0.8]]
  const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  const double l1 =
      -std::log(std::exp(0.8) / (std::exp(0.6) + std::exp(0.8)));
  CHECK(contrastive_loss(anchors, targets, 1.0) ==
        doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-12));

  // The loss is one-directional: swapping roles changes it.
  CHECK(contrastive_loss(anchors, targets, 1.0) !=
        contrastive_loss(targets, anchors, 1.0));
}

TEST_CASE("contrastive loss is invariant to row scaling") {
  Rng rng(3);
  Mat a = rng.gaussian_mat(4, 6);
  Mat t = rng.gaussian_mat(4, 6);
  const double base = contrastive_loss(a, t, 0.07);
  Mat a2 = a * 12.0;
  Mat t2 = t * 0.03;
  CHECK(contrastive_loss(a2, t2, 0.07) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("contrastive loss input validation") {
  Mat a = Mat::Identity(2, 2);
  CHECK_THROWS_AS(contrastive_loss(a, a, 0.0), ConfigError);
  CHECK_THROWS_AS(contrastive_loss(a, a, -1.0), ConfigError);

  Mat z = a;
  z.row(1).setZero();
  CHECK_THROWS_AS(contrastive_loss(z, a, 1.0), NumericError);
  CHECK_THROWS_AS(contrastive_loss(a, z, 1.0), NumericError);
}

TEST_CASE("temperature stability far below one") {
  // Large logits (1/tau = 1e4) must not overflow thanks to the
  // stabilized log-sum-exp.
  Mat eye = Mat::Identity(3, 3);
  const double loss = contrastive_loss(eye, eye, 1e-4);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mse losses match hand values") {
  Mat pred(1, 2), target(1, 2);
  pred << 0.0, 0.0;
  target << 1.0, 0.0;
  CHECK(mse_loss_visual(pred, target) == doctest::Approx(0.5).epsilon(1e-15));

  Mat p2(2, 2), t2(2, 2);
  p2 << 1.0, 2.0, 3.0, 4.0;
  t2 << 0.0, 2.0, 3.0, 2.0;
  // squared diffs: 1 + 0 + 0 + 4 = 5; 5 / (B*d) = 5/4
  CHECK(mse_loss_visual(p2, t2) == doctest::Approx(1.25).epsilon(1e-15));

  Mat zc(1, 2), zt(1, 2), zs(1, 2);
  zs << 0.0, 0.0;
  zc << 1.0, 0.0;  // mse 0.5
  zt << 0.0, 2.0;  // mse 2.0
  CHECK(mse_loss_text(zs, zc, zt) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("text alignment averages coarse and fine terms") {
  Rng rng(5);
  Mat zs = rng.gaussian_mat(3, 4);
  Mat zc = rng.gaussian_mat(3, 4);
  Mat zt = rng.gaussian_mat(3, 4);
  auto r = clip_text_loss(zs, zc, zt, 0.07);
  CHECK(r.clip_t1 == doctest::Approx(contrastive_loss(zs, zc, 0.07)).epsilon(1e-15));
  CHECK(r.clip_t2 == doctest::Approx(contrastive_loss(zs, zt, 0.07)).epsilon(1e-15));
  CHECK(r.clip_t == (r.clip_t1 + r.clip_t2) / 2.0);
}

TEST_CASE("overall loss coefficient probes") {
  const double alpha = 0.5, beta = 2.0;
  CHECK(combine_overall(1, 0, 0, 0, alpha, beta) == 0.5);
  CHECK(combine_overall(0, 0, 1, 0, alpha, beta) == 1.0);
  CHECK(combine_overall(0, 1, 0, 0, alpha, beta) == 0.5);
  CHECK(combine_overall(0, 0, 0, 1, alpha, beta) == 1.0);
  CHECK(combine_overall(1, 1, 1, 1, alpha, beta) == 3.0);

  // Generic coefficients probe the exact weighting structure.
  const double a2 = 0.3, b2 = 1.7;
  CHECK(combine_overall(1, 0, 0, 0, a2, b2) == doctest::Approx(a2).epsilon(1e-15));
  CHECK(combine_overall(0, 0, 1, 0, a2, b2) == doctest::Approx(a2 * b2).epsilon(1e-15));
  CHECK(combine_overall(0, 1, 0, 0, a2, b2) == doctest::Approx(1.0 - a2).epsilon(1e-15));
  CHECK(combine_overall(0, 0, 0, 1, a2, b2) ==
        doctest::Approx((1.0 - a2) * b2).epsilon(1e-15));
}

TEST_CASE("compute_losses is consistent with the individual terms") {
  Rng rng(7);
  Mat zv_hat = rng.gaussian_mat(4, 6);
  Mat zs_hat = rng.gaussian_mat(4, 6);
  Mat zv = rng.gaussian_mat(4, 6);
  Mat zc = rng.gaussian_mat(4, 6);
  Mat zt = rng.gaussian_mat(4, 6);
  const double tau = 0.07, alpha = 0.5, beta = 2.0;

  auto lb = compute_losses(zv_hat, zs_hat, zv, zc, zt, tau, alpha, beta);
  CHECK(lb.clip_v == contrastive_loss(zv_hat, zv, tau));
  CHECK(lb.clip_t1 == contrastive_loss(zs_hat, zc, tau));
  CHECK(lb.clip_t2 == contrastive_loss(zs_hat, zt, tau));
  CHECK(lb.clip_t == (lb.clip_t1 + lb.clip_t2) / 2.0);
  CHECK(lb.mse_v == mse_loss_visual(zv_hat, zv));
  CHECK(lb.mse_t == mse_loss_text(zs_hat, zc, zt));
  CHECK(lb.total ==
        combine_overall(lb.clip_v, lb.clip_t, lb.mse_v, lb.mse_t, alpha, beta));
}

TEST_CASE("graph losses equal the plain functions") {
  Rng rng(11);
  Mat zv_hat = rng.gaussian_mat(3, 5);
  Mat zs_hat = rng.gaussian_mat(3, 5);
  Mat zv = rng.gaussian_mat(3, 5);
  Mat zc = rng.gaussian_mat(3, 5);
  Mat zt = rng.gaussian_mat(3, 5);
  const double tau = 0.07, alpha = 0.5, beta = 2.0;

  Graph g;
  auto nv = g.leaf(zv_hat, true);
  auto ns = g.leaf(zs_hat, true);
  auto ntau = g.scalar_leaf(tau);
  auto nodes = build_overall_loss(g, nv, ns, zv, zc, zt, ntau, alpha, beta);
  auto lb = read_losses(g, nodes);
  auto plain = compute_losses(zv_hat, zs_hat, zv, zc, zt, tau, alpha, beta);

  CHECK(lb.clip_v == doctest::Approx(plain.clip_v).epsilon(1e-14));
  CHECK(lb.clip_t == doctest::Approx(plain.clip_t).epsilon(1e-14));
  CHECK(lb.mse_v == doctest::Approx(plain.mse_v).epsilon(1e-14));
  CHECK(lb.mse_t == doctest::Approx(plain.mse_t).epsilon(1e-14));
  // The combiner applies the identical operation order: exact equality.
  CHECK(lb.total ==
        combine_overall(lb.clip_v, lb.clip_t, lb.mse_v, lb.mse_t, alpha, beta));
}

TEST_CASE("graph loss gradients match finite differences") {
  Rng rng(13);
  const Mat zv_hat0 = rng.gaussian_mat(3, 4);
  const Mat zs_hat0 = rng.gaussian_mat(3, 4);
  const Mat zv = rng.gaussian_mat(3, 4);
  const Mat zc = rng.gaussian_mat(3, 4);
  const Mat zt = rng.gaussian_mat(3, 4);
  const double alpha = 0.5, beta = 2.0;
  const double log_tau0 = std::log(0.07);

  auto eval = [&](const Mat& a, const Mat& b, double log_tau) {
    Graph g;
    auto tau = g.exp(g.scalar_leaf(log_tau));
    auto nodes = build_overall_loss(g, g.leaf(a), g.leaf(b), zv, zc, zt, tau,
                                    alpha, beta);
    return g.scalar(nodes.total);
  };

  Graph g;
  auto nv = g.leaf(zv_hat0, true);
  auto ns = g.leaf(zs_hat0, true);
  auto nlog_tau = g.scalar_leaf(log_tau0, true);
  auto nodes = build_overall_loss(g, nv, ns, zv, zc, zt, g.exp(nlog_tau),
                                  alpha, beta);
  g.backward(nodes.total);

  const double step = 1e-6;
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      Mat p = zv_hat0, m = zv_hat0;
      p(i, j) += step;
      m(i, j) -= step;
      const double fd = (eval(p, zs_hat0, log_tau0) - eval(m, zs_hat0, log_tau0)) /
                        (2.0 * step);
      CHECK(g.grad(nv)(i, j) == doctest::Approx(fd).epsilon(1e-5));

      Mat ps = zs_hat0, ms = zs_hat0;
      ps(i, j) += step;
      ms(i, j) -= step;
      const double fds = (eval(zv_hat0, ps, log_tau0) - eval(zv_hat0, ms, log_tau0)) /
                         (2.0 * step);
      CHECK(g.grad(ns)(i, j) == doctest::Approx(fds).epsilon(1e-5));
    }
  }
  const double fd_tau = (eval(zv_hat0, zs_hat0, log_tau0 + step) -
                         eval(zv_hat0, zs_hat0, log_tau0 - step)) /
                        (2.0 * step);
  CHECK(g.grad(nlog_tau)(0, 0) == doctest::Approx(fd_tau).epsilon(1e-5));
}

}  // TEST_SUITE
