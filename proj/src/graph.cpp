#include "neuvis/graph.hpp"

#include <cmath>
#include <numbers>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Graph::Id Graph::push(Node n) {
  for (Id in : n.inputs)
    if (nodes_[static_cast<std::size_t>(in)].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::leaf(const Mat& value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::scalar_leaf(double value, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = value;
  return leaf(m, requires_grad);
}

#define NV_NODE(name) \
  Node n;             \
  n.op = Op::name;

Graph::Id Graph::add(Id a, Id b) {
  NV_NODE(add);
  n.inputs = {a, b};
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Graph::Id Graph::sub(Id a, Id b) {
  NV_NODE(sub);
  n.inputs = {a, b};
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Graph::Id Graph::hadamard(Id a, Id b) {
  NV_NODE(hadamard);
  n.inputs = {a, b};
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

Graph::Id Graph::matmul(Id a, Id b) {
  if (value(a).cols() != value(b).rows())
    throw NumericError("matmul shape mismatch");
  NV_NODE(matmul);
  n.inputs = {a, b};
  n.value = value(a) * value(b);
  return push(std::move(n));
}

Graph::Id Graph::transpose(Id a) {
  NV_NODE(transpose);
  n.inputs = {a};
  n.value = value(a).transpose();
  return push(std::move(n));
}

Graph::Id Graph::scale(Id a, double c) {
  NV_NODE(scale);
  n.inputs = {a};
  n.c = c;
  n.value = value(a) * c;
  return push(std::move(n));
}

Graph::Id Graph::add_scalar(Id a, double c) {
  NV_NODE(add_scalar);
  n.inputs = {a};
  n.c = c;
  n.value = value(a).array() + c;
  return push(std::move(n));
}

Graph::Id Graph::add_rowvec(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw NumericError("add_rowvec shape mismatch");
  NV_NODE(add_rowvec);
  n.inputs = {a, row};
  n.value = value(a).rowwise() + value(row).row(0);
  return push(std::move(n));
}

Graph::Id Graph::mul_rowvec(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw NumericError("mul_rowvec shape mismatch");
  NV_NODE(mul_rowvec);
  n.inputs = {a, row};
  n.value = value(a).array().rowwise() * value(row).row(0).array();
  return push(std::move(n));
}

Graph::Id Graph::div_scalar_node(Id a, Id s) {
  if (value(s).size() != 1) throw NumericError("div_scalar_node needs 1x1 divisor");
  NV_NODE(div_scalar_node);
  n.inputs = {a, s};
  n.value = value(a) / value(s)(0, 0);
  return push(std::move(n));
}

Graph::Id Graph::mul_scalar_node(Id a, Id s) {
  if (value(s).size() != 1) throw NumericError("mul_scalar_node needs 1x1 factor");
  NV_NODE(mul_scalar_node);
  n.inputs = {a, s};
  n.value = value(a) * value(s)(0, 0);
  return push(std::move(n));
}

Graph::Id Graph::gelu(Id a) {
  NV_NODE(gelu);
  n.inputs = {a};
  n.value = value(a).unaryExpr([](double x) { return gelu_value(x); });
  return push(std::move(n));
}

Graph::Id Graph::exp(Id a) {
  NV_NODE(exp_);
  n.inputs = {a};
  n.value = value(a).array().exp();
  return push(std::move(n));
}

Graph::Id Graph::log(Id a) {
  NV_NODE(log_);
  n.inputs = {a};
  n.value = value(a).array().log();
  return push(std::move(n));
}

Graph::Id Graph::square(Id a) {
  NV_NODE(square);
  n.inputs = {a};
  n.value = value(a).array().square();
  return push(std::move(n));
}

Graph::Id Graph::tanh(Id a) {
  NV_NODE(tanh_);
  n.inputs = {a};
  n.value = value(a).array().tanh();
  return push(std::move(n));
}

Graph::Id Graph::softmax_rows(Id a) {
  NV_NODE(softmax_rows);
  n.inputs = {a};
  const Mat& x = value(a);
  n.value.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    n.value.row(r) = (e / e.sum()).matrix();
  }
  return push(std::move(n));
}

Graph::Id Graph::log_softmax_rows(Id a) {
  NV_NODE(log_softmax_rows);
  n.inputs = {a};
  const Mat& x = value(a);
  n.value.resize(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    n.value.row(r) = x.row(r).array() - lse;
  }
  return push(std::move(n));
}

Graph::Id Graph::l2_normalize_rows(Id a) {
  NV_NODE(l2_normalize_rows);
  n.inputs = {a};
  const Mat& x = value(a);
  n.value.resize(x.rows(), x.cols());
  n.aux.resize(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = std::max(x.row(r).norm(), 1e-12);
    n.aux(r, 0) = norm;
    n.value.row(r) = x.row(r) / norm;
  }
  return push(std::move(n));
}

Graph::Id Graph::layer_norm_rows(Id a, double eps) {
  NV_NODE(layer_norm_rows);
  n.inputs = {a};
  n.c = eps;
  const Mat& x = value(a);
  const auto d = static_cast<double>(x.cols());
  n.value.resize(x.rows(), x.cols());
  n.aux.resize(x.rows(), 1);  // inverse std per row
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / d;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    n.aux(r, 0) = inv_std;
    n.value.row(r) = (x.row(r).array() - mean) * inv_std;
  }
  return push(std::move(n));
}

Graph::Id Graph::sum_all(Id a) {
  NV_NODE(sum_all);
  n.inputs = {a};
  n.value.resize(1, 1);
  n.value(0, 0) = value(a).sum();
  return push(std::move(n));
}

Graph::Id Graph::mean_all(Id a) {
  const auto count = static_cast<double>(value(a).size());
  return scale(sum_all(a), 1.0 / count);
}

Graph::Id Graph::take_diag(Id a) {
  if (value(a).rows() != value(a).cols())
    throw NumericError("take_diag needs a square matrix");
  NV_NODE(take_diag);
  n.inputs = {a};
  n.value = value(a).diagonal();
  return push(std::move(n));
}

Graph::Id Graph::slice_rows(Id a, Eigen::Index start, Eigen::Index count) {
  NV_NODE(slice_rows);
  n.inputs = {a};
  n.i0 = start;
  n.i1 = count;
  n.value = value(a).middleRows(start, count);
  return push(std::move(n));
}

Graph::Id Graph::slice_cols(Id a, Eigen::Index start, Eigen::Index count) {
  NV_NODE(slice_cols);
  n.inputs = {a};
  n.i0 = start;
  n.i1 = count;
  n.value = value(a).middleCols(start, count);
  return push(std::move(n));
}

Graph::Id Graph::concat_cols(Id a, Id b) {
  if (value(a).rows() != value(b).rows())
    throw NumericError("concat_cols row mismatch");
  NV_NODE(concat_cols);
  n.inputs = {a, b};
  n.value.resize(value(a).rows(), value(a).cols() + value(b).cols());
  n.value << value(a), value(b);
  return push(std::move(n));
}

Graph::Id Graph::stack_rows(const std::vector<Id>& parts) {
  if (parts.empty()) throw NumericError("stack_rows needs inputs");
  NV_NODE(stack_rows);
  n.inputs = parts;
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  for (Id p : parts) {
    if (value(p).cols() != cols) throw NumericError("stack_rows column mismatch");
    rows += value(p).rows();
  }
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    n.value.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  return push(std::move(n));
}

Graph::Id Graph::gather(Id a, const Eigen::MatrixXi& rows_idx,
                        const Eigen::MatrixXi& cols_idx) {
  if (rows_idx.rows() != cols_idx.rows() || rows_idx.cols() != cols_idx.cols())
    throw NumericError("gather index shape mismatch");
  NV_NODE(gather);
  n.inputs = {a};
  n.rows_idx = rows_idx;
  n.cols_idx = cols_idx;
  const Mat& x = value(a);
  n.value.resize(rows_idx.rows(), rows_idx.cols());
  for (Eigen::Index i = 0; i < rows_idx.rows(); ++i)
    for (Eigen::Index j = 0; j < rows_idx.cols(); ++j)
      n.value(i, j) = x(rows_idx(i, j), cols_idx(i, j));
  return push(std::move(n));
}

Graph::Id Graph::mean_pool_rows(Id a, Eigen::Index pool, Eigen::Index block_rows) {
  const Mat& x = value(a);
  if (pool < 1 || block_rows < pool || x.rows() % block_rows != 0)
    throw NumericError("mean_pool_rows bad block layout");
  NV_NODE(mean_pool_rows);
  n.inputs = {a};
  n.i0 = pool;
  n.i1 = block_rows;
  const Eigen::Index blocks = x.rows() / block_rows;
  const Eigen::Index out_per_block = block_rows / pool;
  n.value.resize(blocks * out_per_block, x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b)
    for (Eigen::Index o = 0; o < out_per_block; ++o) {
      n.value.row(b * out_per_block + o) =
          x.middleRows(b * block_rows + o * pool, pool).colwise().mean();
    }
  return push(std::move(n));
}

#undef NV_NODE

double Graph::scalar(Id id) const {
  const Mat& v = value(id);
  if (v.size() != 1) throw NumericError("scalar() on non-1x1 node");
  return v(0, 0);
}

const Mat& Graph::grad(Id id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) throw NumericError("gradient not populated for node");
  return n.grad;
}

Mat& Graph::grad_buf(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Id id) {
  if (value(id).size() != 1) throw NumericError("backward needs a 1x1 loss node");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_buf(id)(0, 0) = 1.0;
  for (Id i = id; i >= 0; --i) backprop_node(i);
}

void Graph::backprop_node(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad || n.op == Op::leaf || n.grad.size() == 0) return;
  const Mat& g = n.grad;
  auto rg = [&](Id in) {
    return nodes_[static_cast<std::size_t>(in)].requires_grad;
  };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::add:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g;
      if (rg(n.inputs[1])) grad_buf(n.inputs[1]) += g;
      break;
    case Op::sub:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g;
      if (rg(n.inputs[1])) grad_buf(n.inputs[1]) -= g;
      break;
    case Op::hadamard:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]) += g.cwiseProduct(value(n.inputs[1]));
      if (rg(n.inputs[1]))
        grad_buf(n.inputs[1]) += g.cwiseProduct(value(n.inputs[0]));
      break;
    case Op::matmul:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g * value(n.inputs[1]).transpose();
      if (rg(n.inputs[1])) grad_buf(n.inputs[1]) += value(n.inputs[0]).transpose() * g;
      break;
    case Op::transpose:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g.transpose();
      break;
    case Op::scale:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g * n.c;
      break;
    case Op::add_scalar:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g;
      break;
    case Op::add_rowvec:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g;
      if (rg(n.inputs[1])) grad_buf(n.inputs[1]) += g.colwise().sum();
      break;
    case Op::mul_rowvec:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]).array() +=
            g.array().rowwise() * value(n.inputs[1]).row(0).array();
      if (rg(n.inputs[1]))
        grad_buf(n.inputs[1]) +=
            g.cwiseProduct(value(n.inputs[0])).colwise().sum();
      break;
    case Op::div_scalar_node: {
      const double s = value(n.inputs[1])(0, 0);
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g / s;
      if (rg(n.inputs[1]))
        grad_buf(n.inputs[1])(0, 0) += -(g.cwiseProduct(n.value)).sum() / s;
      break;
    }
    case Op::mul_scalar_node: {
      const double s = value(n.inputs[1])(0, 0);
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g * s;
      if (rg(n.inputs[1]))
        grad_buf(n.inputs[1])(0, 0) += g.cwiseProduct(value(n.inputs[0])).sum();
      break;
    }
    case Op::gelu:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]) += g.cwiseProduct(value(n.inputs[0]).unaryExpr(
            [](double x) { return gelu_derivative(x); }));
      break;
    case Op::exp_:
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g.cwiseProduct(n.value);
      break;
    case Op::log_:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]) += g.cwiseQuotient(value(n.inputs[0]));
      break;
    case Op::square:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]) += 2.0 * g.cwiseProduct(value(n.inputs[0]));
      break;
    case Op::tanh_:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]).array() += g.array() * (1.0 - n.value.array().square());
      break;
    case Op::softmax_rows:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double dot = g.row(r).dot(n.value.row(r));
          ga.row(r).array() +=
              n.value.row(r).array() * (g.row(r).array() - dot);
        }
      }
      break;
    case Op::log_softmax_rows:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double gsum = g.row(r).sum();
          ga.row(r).array() +=
              g.row(r).array() - gsum * n.value.row(r).array().exp();
        }
      }
      break;
    case Op::l2_normalize_rows:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double norm = n.aux(r, 0);
          const double dot = g.row(r).dot(n.value.row(r));
          ga.row(r) += (g.row(r) - dot * n.value.row(r)) / norm;
        }
      }
      break;
    case Op::layer_norm_rows:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        const auto d = static_cast<double>(g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const double inv_std = n.aux(r, 0);
          const double gmean = g.row(r).mean();
          const double gydot = g.row(r).dot(n.value.row(r)) / d;
          ga.row(r).array() +=
              inv_std * (g.row(r).array() - gmean -
                         n.value.row(r).array() * gydot);
        }
      }
      break;
    case Op::sum_all:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]).array() += g(0, 0);
      break;
    case Op::take_diag:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        for (Eigen::Index r = 0; r < g.rows(); ++r) ga(r, r) += g(r, 0);
      }
      break;
    case Op::slice_rows:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]).middleRows(n.i0, n.i1) += g;
      break;
    case Op::slice_cols:
      if (rg(n.inputs[0]))
        grad_buf(n.inputs[0]).middleCols(n.i0, n.i1) += g;
      break;
    case Op::concat_cols: {
      const Eigen::Index ca = value(n.inputs[0]).cols();
      if (rg(n.inputs[0])) grad_buf(n.inputs[0]) += g.leftCols(ca);
      if (rg(n.inputs[1])) grad_buf(n.inputs[1]) += g.rightCols(g.cols() - ca);
      break;
    }
    case Op::stack_rows: {
      Eigen::Index at = 0;
      for (Id p : n.inputs) {
        const Eigen::Index rows = value(p).rows();
        if (rg(p)) grad_buf(p) += g.middleRows(at, rows);
        at += rows;
      }
      break;
    }
    case Op::gather:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        for (Eigen::Index i = 0; i < g.rows(); ++i)
          for (Eigen::Index j = 0; j < g.cols(); ++j)
            ga(n.rows_idx(i, j), n.cols_idx(i, j)) += g(i, j);
      }
      break;
    case Op::mean_pool_rows:
      if (rg(n.inputs[0])) {
        Mat& ga = grad_buf(n.inputs[0]);
        const Eigen::Index pool = n.i0;
        const Eigen::Index block_rows = n.i1;
        const Eigen::Index out_per_block = block_rows / pool;
        const double inv = 1.0 / static_cast<double>(pool);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          const Eigen::Index b = r / out_per_block;
          const Eigen::Index o = r % out_per_block;
          for (Eigen::Index p = 0; p < pool; ++p)
            ga.row(b * block_rows + o * pool + p) += g.row(r) * inv;
        }
      }
      break;
  }
}

}  // namespace neuvis
