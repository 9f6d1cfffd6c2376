#include "neuvis/losses.hpp"

#include <cmath>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

Mat normalize_rows_checked(const Mat& m, const char* what) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm < 1e-12)
      throw NumericError(std::string("zero-norm row in ") + what +
                         " makes cosine similarity undefined");
    out.row(r) = m.row(r) / norm;
  }
  return out;
}

void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw NumericError(std::string("shape mismatch in ") + what);
}

}  // namespace

double combine_overall(double clip_v, double clip_t, double mse_v,
                       double mse_t, double alpha, double beta) {
  return alpha * (clip_v + beta * mse_v) + (1.0 - alpha) * (clip_t + beta * mse_t);
}

double contrastive_loss(const Mat& anchors, const Mat& targets, double tau) {
  if (tau <= 0.0) throw ConfigError("temperature must be positive");
  check_same_shape(anchors, targets, "contrastive_loss");
  if (anchors.rows() < 1) throw NumericError("contrastive_loss needs B >= 1");
  Mat a = normalize_rows_checked(anchors, "anchors");
  Mat t = normalize_rows_checked(targets, "targets");
  Mat logits = (a * t.transpose()) / tau;
  const Eigen::Index b = logits.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    loss -= logits(i, i) - lse;
  }
  return loss / static_cast<double>(b);
}

ClipTextLoss clip_text_loss(const Mat& zs_hat, const Mat& zc, const Mat& zt,
                            double tau) {
  ClipTextLoss out;
  out.clip_t1 = contrastive_loss(zs_hat, zc, tau);
  out.clip_t2 = contrastive_loss(zs_hat, zt, tau);
  out.clip_t = (out.clip_t1 + out.clip_t2) / 2.0;
  return out;
}

double mse_loss_visual(const Mat& zv_hat, const Mat& zv) {
  check_same_shape(zv_hat, zv, "mse_loss_visual");
  const double bd = static_cast<double>(zv.rows()) * static_cast<double>(zv.cols());
  return (zv - zv_hat).squaredNorm() / bd;
}

double mse_loss_text(const Mat& zs_hat, const Mat& zc, const Mat& zt) {
  check_same_shape(zs_hat, zc, "mse_loss_text");
  check_same_shape(zs_hat, zt, "mse_loss_text");
  const double bd = static_cast<double>(zc.rows()) * static_cast<double>(zc.cols());
  const double a = (zc - zs_hat).squaredNorm() / bd;
  const double b = (zt - zs_hat).squaredNorm() / bd;
  return (a + b) / 2.0;
}

LossBreakdown compute_losses(const Mat& zv_hat, const Mat& zs_hat,
                             const Mat& zv, const Mat& zc, const Mat& zt,
                             double tau, double alpha, double beta) {
  LossBreakdown l;
  l.clip_v = contrastive_loss(zv_hat, zv, tau);
  ClipTextLoss ct = clip_text_loss(zs_hat, zc, zt, tau);
  l.clip_t1 = ct.clip_t1;
  l.clip_t2 = ct.clip_t2;
  l.clip_t = ct.clip_t;
  l.mse_v = mse_loss_visual(zv_hat, zv);
  l.mse_t = mse_loss_text(zs_hat, zc, zt);
  l.total = combine_overall(l.clip_v, l.clip_t, l.mse_v, l.mse_t, alpha, beta);
  return l;
}

Graph::Id build_contrastive(Graph& g, Graph::Id anchors, Graph::Id targets,
                            Graph::Id tau) {
  if (g.scalar(tau) <= 0.0) throw ConfigError("temperature must be positive");
  normalize_rows_checked(g.value(anchors), "anchors");
  normalize_rows_checked(g.value(targets), "targets");
  const auto b = static_cast<double>(g.value(anchors).rows());
  Graph::Id an = g.l2_normalize_rows(anchors);
  Graph::Id tn = g.l2_normalize_rows(targets);
  Graph::Id logits = g.div_scalar_node(g.matmul(an, g.transpose(tn)), tau);
  Graph::Id diag = g.take_diag(g.log_softmax_rows(logits));
  return g.scale(g.sum_all(diag), -1.0 / b);
}

Graph::Id build_mse(Graph& g, Graph::Id pred, Graph::Id target) {
  const auto bd = static_cast<double>(g.value(pred).size());
  return g.scale(g.sum_all(g.square(g.sub(target, pred))), 1.0 / bd);
}

LossNodes build_overall_loss(Graph& g, Graph::Id zv_hat, Graph::Id zs_hat,
                             const Mat& zv, const Mat& zc, const Mat& zt,
                             Graph::Id tau, double alpha, double beta) {
  LossNodes n;
  Graph::Id zv_id = g.leaf(zv);
  Graph::Id zc_id = g.leaf(zc);
  Graph::Id zt_id = g.leaf(zt);
  n.clip_v = build_contrastive(g, zv_hat, zv_id, tau);
  n.clip_t1 = build_contrastive(g, zs_hat, zc_id, tau);
  n.clip_t2 = build_contrastive(g, zs_hat, zt_id, tau);
  n.clip_t = g.scale(g.add(n.clip_t1, n.clip_t2), 0.5);
  n.mse_v = build_mse(g, zv_hat, zv_id);
  n.mse_t = g.scale(g.add(build_mse(g, zs_hat, zc_id), build_mse(g, zs_hat, zt_id)), 0.5);
  n.total = g.add(g.scale(g.add(n.clip_v, g.scale(n.mse_v, beta)), alpha),
                  g.scale(g.add(n.clip_t, g.scale(n.mse_t, beta)), 1.0 - alpha));
  return n;
}

LossBreakdown read_losses(const Graph& g, const LossNodes& nodes) {
  LossBreakdown l;
  l.clip_v = g.scalar(nodes.clip_v);
  l.clip_t1 = g.scalar(nodes.clip_t1);
  l.clip_t2 = g.scalar(nodes.clip_t2);
  l.clip_t = g.scalar(nodes.clip_t);
  l.mse_v = g.scalar(nodes.mse_v);
  l.mse_t = g.scalar(nodes.mse_t);
  l.total = g.scalar(nodes.total);
  return l;
}

}  // namespace neuvis
