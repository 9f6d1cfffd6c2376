#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "neuvis/graph.hpp"

using namespace neuvis;

namespace {

using Builder =
    std::function<Graph::Id(Graph&, const std::vector<Graph::Id>&)>;

double eval_scalar(const Builder& build, const std::vector<Mat>& inputs) {
  Graph g;
  std::vector<Graph::Id> ids;
  ids.reserve(inputs.size());
  for (const auto& m : inputs) ids.push_back(g.leaf(m, false));
  return g.scalar(build(g, ids));
}

// Central finite differences against reverse-mode gradients on every entry.
void check_grads_fd(const std::vector<Mat>& inputs, const Builder& build,
                    double tol = 1e-6, double step = 1e-5) {
  Graph g;
  std::vector<Graph::Id> ids;
  for (const auto& m : inputs) ids.push_back(g.leaf(m, true));
  Graph::Id out = build(g, ids);
  g.backward(out);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat analytic = g.grad(ids[k]);
    REQUIRE(analytic.rows() == inputs[k].rows());
    REQUIRE(analytic.cols() == inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
        auto shifted = inputs;
        shifted[k](i, j) += step;
        const double fp = eval_scalar(build, shifted);
        shifted[k](i, j) -= 2.0 * step;
        const double fm = eval_scalar(build, shifted);
        const double fd = (fp - fm) / (2.0 * step);
        const double a = analytic(i, j);
        const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
        INFO("input ", k, " entry (", i, ",", j, "): analytic ", a, " fd ", fd);
        CHECK(err < tol);
      }
    }
  }
}

// Reduce any node to a scalar with fixed pseudo-random weights so the
// gradient exercises every output entry differently.
Graph::Id weighted_sum(Graph& g, Graph::Id node, std::uint64_t salt) {
  Rng rng(salt);
  const Mat w = rng.gaussian_mat(g.value(node).rows(), g.value(node).cols());
  return g.sum_all(g.hadamard(node, g.leaf(w)));
}

Mat test_mat(std::uint64_t seed, Eigen::Index r, Eigen::Index c,
             double scale = 1.0, double offset = 0.0) {
  Rng rng(seed);
  Mat m = rng.gaussian_mat(r, c) * scale;
  m.array() += offset;
  return m;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("elementwise and scalar ops differentiate correctly") {
  const Mat a = test_mat(1, 3, 4);
  const Mat b = test_mat(2, 3, 4);

  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.add(in[0], in[1]), 10);
  });
  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.sub(in[0], in[1]), 11);
  });
  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.hadamard(in[0], in[1]), 12);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.scale(in[0], -2.5), 13);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.add_scalar(in[0], 0.7), 14);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.square(in[0]), 15);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.tanh(in[0]), 16);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.exp(in[0]), 17);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.gelu(in[0]), 18);
  });

  const Mat pos = test_mat(3, 3, 4, 0.2, 2.0);  // strictly positive
  check_grads_fd({pos}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.log(in[0]), 19);
  });
}

TEST_CASE("matmul, transpose and broadcast ops differentiate correctly") {
  const Mat a = test_mat(4, 3, 4);
  const Mat b = test_mat(5, 4, 2);
  const Mat row = test_mat(6, 1, 4);
  const Mat s = test_mat(7, 1, 1, 0.1, 1.5);  // nonzero scalar

  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.matmul(in[0], in[1]), 20);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.transpose(in[0]), 21);
  });
  check_grads_fd({a, row}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.add_rowvec(in[0], in[1]), 22);
  });
  check_grads_fd({a, row}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.mul_rowvec(in[0], in[1]), 23);
  });
  check_grads_fd({a, s}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.div_scalar_node(in[0], in[1]), 24);
  });
  check_grads_fd({a, s}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.mul_scalar_node(in[0], in[1]), 25);
  });
}

TEST_CASE("row-normalizing ops differentiate correctly") {
  const Mat a = test_mat(8, 3, 5);

  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.softmax_rows(in[0]), 30);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.log_softmax_rows(in[0]), 31);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.l2_normalize_rows(in[0]), 32);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.layer_norm_rows(in[0]), 33);
  }, 1e-5);
}

TEST_CASE("reduction and indexing ops differentiate correctly") {
  const Mat a = test_mat(9, 4, 4);
  const Mat b = test_mat(10, 2, 4);

  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return g.sum_all(g.square(in[0]));
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return g.mean_all(g.square(in[0]));
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.take_diag(in[0]), 40);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.slice_rows(in[0], 1, 2), 41);
  });
  check_grads_fd({a}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.slice_cols(in[0], 2, 2), 42);
  });
  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.concat_cols(g.transpose(in[0]), g.transpose(in[1])), 43);
  });
  check_grads_fd({a, b}, [](Graph& g, const std::vector<Graph::Id>& in) {
    return weighted_sum(g, g.stack_rows({in[0], in[1], in[0]}), 44);
  });
}

TEST_CASE("gather forward values and gradients") {
  Mat a(2, 3);
  a << 1, 2, 3,
       4, 5, 6;
  Eigen::MatrixXi ri(2, 2), ci(2, 2);
  ri << 0, 1,
        1, 0;
  ci << 2, 0,
        1, 1;

  Graph g;
  auto x = g.leaf(a, true);
  auto y = g.gather(x, ri, ci);
  CHECK(g.value(y)(0, 0) == 3.0);
  CHECK(g.value(y)(0, 1) == 4.0);
  CHECK(g.value(y)(1, 0) == 5.0);
  CHECK(g.value(y)(1, 1) == 2.0);

  check_grads_fd({test_mat(11, 2, 3)},
                 [&](Graph& gg, const std::vector<Graph::Id>& in) {
                   return weighted_sum(gg, gg.gather(in[0], ri, ci), 45);
                 });

  // Repeated sources must accumulate gradient.
  Eigen::MatrixXi rr = Eigen::MatrixXi::Zero(1, 3);
  Eigen::MatrixXi cc = Eigen::MatrixXi::Zero(1, 3);
  Graph g2;
  auto x2 = g2.leaf(a, true);
  auto y2 = g2.gather(x2, rr, cc);
  g2.backward(g2.sum_all(y2));
  CHECK(g2.grad(x2)(0, 0) == 3.0);
  CHECK(g2.grad(x2)(1, 2) == 0.0);
}

TEST_CASE("mean_pool_rows forward values and gradients") {
  // Two blocks of 4 rows, pool 2 -> each block yields 2 rows.
  Mat a(8, 2);
  for (Eigen::Index i = 0; i < 8; ++i) {
    a(i, 0) = static_cast<double>(i);
    a(i, 1) = static_cast<double>(10 * i);
  }
  Graph g;
  auto x = g.leaf(a, true);
  auto y = g.mean_pool_rows(x, 2, 4);
  REQUIRE(g.value(y).rows() == 4);
  CHECK(g.value(y)(0, 0) == doctest::Approx(0.5));
  CHECK(g.value(y)(1, 0) == doctest::Approx(2.5));
  CHECK(g.value(y)(2, 0) == doctest::Approx(4.5));
  CHECK(g.value(y)(3, 1) == doctest::Approx(65.0));

  check_grads_fd({test_mat(12, 8, 2)},
                 [](Graph& gg, const std::vector<Graph::Id>& in) {
                   return weighted_sum(gg, gg.mean_pool_rows(in[0], 2, 4), 46);
                 });
}

TEST_CASE("gelu closed-form values and derivative") {
  CHECK(gelu_value(0.0) == 0.0);
  CHECK(gelu_value(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(gelu_value(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
  for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
    const double h = 1e-6;
    const double fd = (gelu_value(x + h) - gelu_value(x - h)) / (2.0 * h);
    CHECK(gelu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("softmax rows sum to one and normalization is exact") {
  Graph g;
  const Mat a = test_mat(13, 5, 7, 3.0);
  auto soft = g.softmax_rows(g.leaf(a));
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(g.value(soft).row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));

  auto logsoft = g.log_softmax_rows(g.leaf(a));
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 7; ++j)
      CHECK(std::exp(g.value(logsoft)(i, j)) ==
            doctest::Approx(g.value(soft)(i, j)).epsilon(1e-12));

  auto norm = g.l2_normalize_rows(g.leaf(a));
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(g.value(norm).row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across reuse of a node") {
  // y = sum(x*x) computed via two paths sharing x
  Mat x0(1, 1);
  x0 << 3.0;
  Graph g;
  auto x = g.leaf(x0, true);
  auto y = g.add(g.square(x), g.square(x));  // 2x^2, dy/dx = 4x = 12
  g.backward(g.sum_all(y));
  CHECK(g.grad(x)(0, 0) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar output") {
  Graph g;
  auto x = g.leaf(test_mat(14, 2, 2), true);
  CHECK_THROWS(g.backward(x));
}

}  // TEST_SUITE
