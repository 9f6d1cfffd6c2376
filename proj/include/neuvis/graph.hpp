#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neuvis/common.hpp"

namespace neuvis {

// Reverse-mode automatic differentiation over dense double matrices.
// Values are computed eagerly at node creation; backward() replays the tape
// in reverse. Scalars are 1x1 matrices.
class Graph {
 public:
  using Id = std::int32_t;

  Id leaf(const Mat& value, bool requires_grad = false);
  Id scalar_leaf(double value, bool requires_grad = false);

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id hadamard(Id a, Id b);
  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id scale(Id a, double c);
  Id add_scalar(Id a, double c);
  Id add_rowvec(Id a, Id row);   // row is 1 x cols(a), broadcast over rows
  Id mul_rowvec(Id a, Id row);
  Id div_scalar_node(Id a, Id s);  // s is 1x1
  Id mul_scalar_node(Id a, Id s);

  Id gelu(Id a);
  Id exp(Id a);
  Id log(Id a);
  Id square(Id a);
  Id tanh(Id a);

  Id softmax_rows(Id a);
  Id log_softmax_rows(Id a);
  Id l2_normalize_rows(Id a);
  Id layer_norm_rows(Id a, double eps = 1e-5);

  Id sum_all(Id a);    // 1x1
  Id mean_all(Id a);   // 1x1
  Id take_diag(Id a);  // n x n -> n x 1

  Id slice_rows(Id a, Eigen::Index start, Eigen::Index count);
  Id slice_cols(Id a, Eigen::Index start, Eigen::Index count);
  Id concat_cols(Id a, Id b);
  Id stack_rows(const std::vector<Id>& parts);

  // value(i,j) = input(rows_idx(i,j), cols_idx(i,j)); backward scatter-adds
  Id gather(Id a, const Eigen::MatrixXi& rows_idx,
            const Eigen::MatrixXi& cols_idx);

  // input rows form consecutive blocks of block_rows; each block yields
  // floor(block_rows / pool) rows, every output row the mean of pool rows
  Id mean_pool_rows(Id a, Eigen::Index pool, Eigen::Index block_rows);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(Id id) const;
  const Mat& grad(Id id) const;
  bool has_grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].grad.size() != 0;
  }
  bool requires_grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  // reverse sweep from a 1x1 node; grads of all requires_grad nodes populated
  void backward(Id id);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf, add, sub, hadamard, matmul, transpose, scale, add_scalar,
    add_rowvec, mul_rowvec, div_scalar_node, mul_scalar_node,
    gelu, exp_, log_, square, tanh_,
    softmax_rows, log_softmax_rows, l2_normalize_rows, layer_norm_rows,
    sum_all, take_diag, slice_rows, slice_cols, concat_cols, stack_rows,
    gather, mean_pool_rows,
  };

  struct Node {
    Op op = Op::leaf;
    std::vector<Id> inputs;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    double c = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    Eigen::MatrixXi rows_idx;
    Eigen::MatrixXi cols_idx;
    Mat aux;  // op-specific forward byproducts reused in backward
  };

  Id push(Node n);
  Mat& grad_buf(Id id);
  void backprop_node(Id id);

  std::vector<Node> nodes_;
};

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace neuvis
