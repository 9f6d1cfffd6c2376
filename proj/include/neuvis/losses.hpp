#pragma once

#include "neuvis/graph.hpp"

namespace neuvis {

struct LossBreakdown {
  double clip_v = 0.0;
  double clip_t1 = 0.0;
  double clip_t2 = 0.0;
  double clip_t = 0.0;
  double mse_v = 0.0;
  double mse_t = 0.0;
  double total = 0.0;
};

// total = alpha*(clip_v + beta*mse_v) + (1-alpha)*(clip_t + beta*mse_t),
// with the identical floating-point operation order as the graph build
double combine_overall(double clip_v, double clip_t, double mse_v,
                       double mse_t, double alpha, double beta);

// -(1/B) sum_i log( exp(s(a_i,t_i)/tau) / sum_j exp(s(a_i,t_j)/tau) ),
// s = cosine similarity; denominator over target index j only
double contrastive_loss(const Mat& anchors, const Mat& targets, double tau);

struct ClipTextLoss {
  double clip_t1 = 0.0;  // against coarse text
  double clip_t2 = 0.0;  // against fine text
  double clip_t = 0.0;   // their mean
};
ClipTextLoss clip_text_loss(const Mat& zs_hat, const Mat& zc, const Mat& zt,
                            double tau);

double mse_loss_visual(const Mat& zv_hat, const Mat& zv);
double mse_loss_text(const Mat& zs_hat, const Mat& zc, const Mat& zt);

LossBreakdown compute_losses(const Mat& zv_hat, const Mat& zs_hat,
                             const Mat& zv, const Mat& zc, const Mat& zt,
                             double tau, double alpha, double beta);

// Graph builders mirroring the plain functions (targets enter as constants).
Graph::Id build_contrastive(Graph& g, Graph::Id anchors, Graph::Id targets,
                            Graph::Id tau);
Graph::Id build_mse(Graph& g, Graph::Id pred, Graph::Id target);

struct LossNodes {
  Graph::Id clip_v = -1;
  Graph::Id clip_t1 = -1;
  Graph::Id clip_t2 = -1;
  Graph::Id clip_t = -1;
  Graph::Id mse_v = -1;
  Graph::Id mse_t = -1;
  Graph::Id total = -1;
};
LossNodes build_overall_loss(Graph& g, Graph::Id zv_hat, Graph::Id zs_hat,
                             const Mat& zv, const Mat& zc, const Mat& zt,
                             Graph::Id tau, double alpha, double beta);

LossBreakdown read_losses(const Graph& g, const LossNodes& nodes);

}  // namespace neuvis
