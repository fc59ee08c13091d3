#pragma once

// The six training objectives. Every indicator-weighted reduction *skips*
// entries whose indicator is zero instead of multiplying by it, so loss values
// and gradients are bit-for-bit independent of masked-out content.
//
// Each loss exists in two forms sharing one evaluator:
//  - a plain function returning a double (inference/analysis/tests),
//  - a `_op` variant that appends a node to a Tape with the analytic gradient.
// The analytic gradients are validated against central finite differences in
// the test suite.

#include "mvfd/autodiff.hpp"
#include "mvfd/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mvfd {

// Norms below this floor are treated as exactly this value inside cosines (and
// the floored vector's direction is treated as constant for gradients).
inline constexpr double kCosNormFloor = 1e-12;

struct LossWeights {
  double alpha = 0.1;   // cross-view prediction weight (stage 1)
  double beta = 0.1;    // semantic contrastive weight (stage 1)
  double gamma = 0.1;   // specific reconstruction weight (stage 2)
  double lambda = 0.1;  // graph disentangling weight (stage 2)
  double tau = 0.5;     // contrastive temperature

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0 && lambda >= 0.0,
            "LossWeights: weights must be nonnegative");
    require(tau > 0.0, "LossWeights: tau must be positive");
  }
};

namespace detail {

struct NormalizedRows {
  Mat R;                      // rows scaled to unit norm (or by 1/floor)
  std::vector<double> norm;   // max(row norm, floor)
  std::vector<char> floored;  // 1 where the true norm was below the floor
};

inline NormalizedRows normalize_rows(const Mat& X) {
  NormalizedRows out;
  out.R.resize(X.rows(), X.cols());
  out.norm.resize(static_cast<size_t>(X.rows()));
  out.floored.resize(static_cast<size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double raw = X.row(i).norm();
    const bool floored = raw < kCosNormFloor;
    const double n = floored ? kCosNormFloor : raw;
    out.R.row(i) = X.row(i) / n;
    out.norm[static_cast<size_t>(i)] = n;
    out.floored[static_cast<size_t>(i)] = floored ? 1 : 0;
  }
  return out;
}

// (1/m) * sum_v (1/d_v) * sum_{i: W(i,v)=1} ||recon_v(i) - target_v(i)||^2.
// Shared by the cross-view prediction loss (stage 1) and the view-specific
// reconstruction loss (stage 2). grads, when non-null, receives d/d recon_v.
inline double masked_prediction_eval(const std::vector<const Mat*>& recon,
                                     const std::vector<Mat>& targets, const Mat& W,
                                     std::vector<Mat>* grads) {
  const int m = static_cast<int>(recon.size());
  require(m >= 1, "masked prediction loss: need at least one view");
  require(targets.size() == recon.size(), "masked prediction loss: view count mismatch");
  require(W.cols() == m, "masked prediction loss: indicator has wrong view count");
  if (grads) grads->clear();
  double total = 0.0;
  for (int v = 0; v < m; ++v) {
    const Mat& P = *recon[static_cast<size_t>(v)];
    const Mat& T = targets[static_cast<size_t>(v)];
    require(P.rows() == T.rows() && P.cols() == T.cols(),
            "masked prediction loss: shape mismatch on view " + std::to_string(v));
    require(W.rows() == P.rows(), "masked prediction loss: indicator row count mismatch");
    const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(P.cols()));
    Mat g;
    if (grads) g = Mat::Zero(P.rows(), P.cols());
    double view_total = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      if (W(i, v) == 0.0) continue;
      view_total += (P.row(i) - T.row(i)).squaredNorm();
      if (grads) g.row(i) = 2.0 * scale * (P.row(i) - T.row(i));
    }
    total += scale * view_total;
    if (grads) grads->push_back(std::move(g));
  }
  return total;
}

// -(1/|G|) * sum_{(i,j): G=1} [ Y log p + (1-Y) log(1-p) ].
inline double masked_bce_eval(const Mat& P, const Mat& Y, const Mat& G, Mat* grad) {
  require(P.rows() == Y.rows() && P.cols() == Y.cols(),
          "masked BCE: prediction/label shape mismatch");
  require(G.rows() == Y.rows() && G.cols() == Y.cols(), "masked BCE: indicator shape mismatch");
  double count = 0.0;
  for (Eigen::Index i = 0; i < G.size(); ++i) {
    if (G(i) != 0.0) count += 1.0;
  }
  require(count > 0.0, "masked BCE: no observed labels");
  if (grad) *grad = Mat::Zero(P.rows(), P.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      if (G(i, j) == 0.0) continue;
      if (Y(i, j) == 1.0) {
        total += std::log(P(i, j));
        if (grad) (*grad)(i, j) = -1.0 / (count * P(i, j));
      } else {
        total += std::log(1.0 - P(i, j));
        if (grad) (*grad)(i, j) = 1.0 / (count * (1.0 - P(i, j)));
      }
    }
  }
  return -total / count;
}

// Cross-view instance-level InfoNCE over per-view label predictions.
// For every ordered view pair (v, u), v != u, and every sample i with both
// views available, the positive is (P_i^v, P_i^u); negatives pair anchor i
// with every other available sample j in views v and u. Similarity is
// exp(cos(., .) / tau). Result is half the sum of -log(pos / (pos + negs)).
inline double contrastive_eval(const std::vector<const Mat*>& preds, const Mat& W, double tau,
                               std::vector<Mat>* grads) {
  const int m = static_cast<int>(preds.size());
  require(m >= 1, "contrastive loss: need at least one view");
  require(tau > 0.0, "contrastive loss: tau must be positive");
  const Eigen::Index b = preds[0]->rows();
  const Eigen::Index c = preds[0]->cols();
  for (const Mat* p : preds)
    require(p->rows() == b && p->cols() == c, "contrastive loss: prediction shapes disagree");
  require(W.rows() == b && W.cols() == m, "contrastive loss: indicator shape mismatch");

  std::vector<NormalizedRows> nr;
  nr.reserve(static_cast<size_t>(m));
  for (const Mat* p : preds) nr.push_back(normalize_rows(*p));

  // Cosine kernels K[v][r] = R_v R_r^T and their exponentials.
  std::vector<std::vector<Mat>> K(static_cast<size_t>(m)), E(static_cast<size_t>(m));
  for (int v = 0; v < m; ++v) {
    for (int r = 0; r < m; ++r) {
      Mat k = nr[static_cast<size_t>(v)].R * nr[static_cast<size_t>(r)].R.transpose();
      E[static_cast<size_t>(v)].push_back((k / tau).array().exp().matrix());
      K[static_cast<size_t>(v)].push_back(std::move(k));
    }
  }

  std::vector<std::vector<Mat>> GK;
  if (grads) {
    GK.resize(static_cast<size_t>(m));
    for (int v = 0; v < m; ++v)
      for (int r = 0; r < m; ++r) GK[static_cast<size_t>(v)].push_back(Mat::Zero(b, b));
  }

  double total = 0.0;
  for (int v = 0; v < m; ++v) {
    for (int u = 0; u < m; ++u) {
      if (u == v) continue;
      const Mat& Evu = E[static_cast<size_t>(v)][static_cast<size_t>(u)];
      const Mat& Evv = E[static_cast<size_t>(v)][static_cast<size_t>(v)];
      for (Eigen::Index i = 0; i < b; ++i) {
        if (W(i, v) == 0.0 || W(i, u) == 0.0) continue;
        const double pos = Evu(i, i);
        double sneg = 0.0;
        for (Eigen::Index j = 0; j < b; ++j) {
          if (j == i) continue;
          if (W(j, u) != 0.0) sneg += Evu(i, j);
          if (W(j, v) != 0.0) sneg += Evv(i, j);
        }
        const double denom = pos + sneg;
        total += std::log(denom) - K[static_cast<size_t>(v)][static_cast<size_t>(u)](i, i) / tau;
        if (grads) {
          Mat& Gvu = GK[static_cast<size_t>(v)][static_cast<size_t>(u)];
          Mat& Gvv = GK[static_cast<size_t>(v)][static_cast<size_t>(v)];
          Gvu(i, i) += (pos / denom - 1.0) / tau;
          for (Eigen::Index j = 0; j < b; ++j) {
            if (j == i) continue;
            if (W(j, u) != 0.0) Gvu(i, j) += Evu(i, j) / (tau * denom);
            if (W(j, v) != 0.0) Gvv(i, j) += Evv(i, j) / (tau * denom);
          }
        }
      }
    }
  }

  if (grads) {
    // K[v][r] = R_v R_r^T, so dL/dR_v += GK[v][r] R_r and dL/dR_r += GK[v][r]^T R_v;
    // then the row-normalization is inverted per row.
    std::vector<Mat> gR(static_cast<size_t>(m));
    for (int v = 0; v < m; ++v) gR[static_cast<size_t>(v)] = Mat::Zero(b, c);
    for (int v = 0; v < m; ++v) {
      for (int r = 0; r < m; ++r) {
        const Mat& G = GK[static_cast<size_t>(v)][static_cast<size_t>(r)];
        gR[static_cast<size_t>(v)].noalias() += G * nr[static_cast<size_t>(r)].R;
        gR[static_cast<size_t>(r)].noalias() += G.transpose() * nr[static_cast<size_t>(v)].R;
      }
    }
    grads->clear();
    for (int v = 0; v < m; ++v) {
      const NormalizedRows& n = nr[static_cast<size_t>(v)];
      Mat g(b, c);
      for (Eigen::Index i = 0; i < b; ++i) {
        const RowVec gr = 0.5 * gR[static_cast<size_t>(v)].row(i);
        if (n.floored[static_cast<size_t>(i)]) {
          g.row(i) = gr / n.norm[static_cast<size_t>(i)];
        } else {
          const double dot = gr.dot(n.R.row(i));
          g.row(i) = (gr - dot * n.R.row(i)) / n.norm[static_cast<size_t>(i)];
        }
      }
      grads->push_back(std::move(g));
    }
  }
  return 0.5 * total;
}

// Per-sample alignment penalty between the shared embedding and each available
// specific embedding, plus pairwise alignment between available specific
// embeddings. Sample i with k available views contributes
//   (1/k) sum_v cos(cbar_i, s_i^v) + (1/(k(k-1))) sum_{v != u} cos(s_i^v, s_i^u)
// (the second term only when k >= 2). Minimizing drives the cosines negative.
inline double graph_disentangle_eval(const Mat& cbar, const std::vector<const Mat*>& specifics,
                                     const Mat& W, Mat* gc, std::vector<Mat>* gs) {
  const int m = static_cast<int>(specifics.size());
  require(m >= 1, "graph disentangling loss: need at least one view");
  const Eigen::Index b = cbar.rows();
  const Eigen::Index d = cbar.cols();
  for (const Mat* s : specifics)
    require(s->rows() == b && s->cols() == d,
            "graph disentangling loss: embedding shapes disagree");
  require(W.rows() == b && W.cols() == m, "graph disentangling loss: indicator shape mismatch");

  const NormalizedRows nc = normalize_rows(cbar);
  std::vector<NormalizedRows> ns;
  ns.reserve(static_cast<size_t>(m));
  for (const Mat* s : specifics) ns.push_back(normalize_rows(*s));

  if (gc) *gc = Mat::Zero(b, d);
  if (gs) {
    gs->clear();
    for (int v = 0; v < m; ++v) gs->push_back(Mat::Zero(b, d));
  }

  // d cos(a, b) / d a = (b_hat - cos * a_hat) / ||a||, with the a_hat term
  // dropped when ||a|| sits on the floor (direction then constant).
  auto accumulate = [](Mat& g, Eigen::Index i, const NormalizedRows& own,
                       const NormalizedRows& other, double cos, double coeff) {
    if (own.floored[static_cast<size_t>(i)]) {
      g.row(i) += coeff * other.R.row(i) / own.norm[static_cast<size_t>(i)];
    } else {
      g.row(i) += coeff * (other.R.row(i) - cos * own.R.row(i)) / own.norm[static_cast<size_t>(i)];
    }
  };

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    std::vector<int> avail;
    for (int v = 0; v < m; ++v) {
      if (W(i, v) != 0.0) avail.push_back(v);
    }
    require(!avail.empty(),
            "graph disentangling loss: row " + std::to_string(i) + " has no available view");
    const double k = static_cast<double>(avail.size());
    for (int v : avail) {
      const double cos = nc.R.row(i).dot(ns[static_cast<size_t>(v)].R.row(i));
      total += cos / k;
      if (gc) accumulate(*gc, i, nc, ns[static_cast<size_t>(v)], cos, 1.0 / k);
      if (gs) accumulate((*gs)[static_cast<size_t>(v)], i, ns[static_cast<size_t>(v)], nc, cos, 1.0 / k);
    }
    if (avail.size() >= 2) {
      const double pair_coeff = 1.0 / (k * (k - 1.0));
      for (int v : avail) {
        for (int u : avail) {
          if (u == v) continue;
          const double cos =
              ns[static_cast<size_t>(v)].R.row(i).dot(ns[static_cast<size_t>(u)].R.row(i));
          total += pair_coeff * cos;
          // Each ordered term depends on both arguments; push its derivative
          // into both embeddings, not just the anchor side.
          if (gs) {
            accumulate((*gs)[static_cast<size_t>(v)], i, ns[static_cast<size_t>(v)],
                       ns[static_cast<size_t>(u)], cos, pair_coeff);
            accumulate((*gs)[static_cast<size_t>(u)], i, ns[static_cast<size_t>(u)],
                       ns[static_cast<size_t>(v)], cos, pair_coeff);
          }
        }
      }
    }
  }
  return total;
}

}  // namespace detail

// ---- Plain API --------------------------------------------------------

// Stage-1 cross-view prediction loss: reconstructions decoded from the shared
// embedding vs. the original (unmasked) views, counted only where available.
inline double masked_prediction_loss(const std::vector<Mat>& recon,
                                     const std::vector<Mat>& targets, const Mat& W) {
  std::vector<const Mat*> r;
  for (const Mat& x : recon) r.push_back(&x);
  return detail::masked_prediction_eval(r, targets, W, nullptr);
}

// Stage-2 view-specific reconstruction loss; same functional form.
inline double reconstruction_loss(const std::vector<Mat>& recon, const std::vector<Mat>& targets,
                                  const Mat& W) {
  return masked_prediction_loss(recon, targets, W);
}

inline double semantic_contrastive_loss(const std::vector<Mat>& preds, const Mat& W, double tau) {
  std::vector<const Mat*> p;
  for (const Mat& x : preds) p.push_back(&x);
  return detail::contrastive_eval(p, W, tau, nullptr);
}

inline double masked_bce_loss(const Mat& probs, const Mat& Y, const Mat& G) {
  return detail::masked_bce_eval(probs, Y, G, nullptr);
}

inline double graph_disentangling_loss(const Mat& cbar, const std::vector<Mat>& specifics,
                                       const Mat& W) {
  std::vector<const Mat*> s;
  for (const Mat& x : specifics) s.push_back(&x);
  return detail::graph_disentangle_eval(cbar, s, W, nullptr, nullptr);
}

inline double stage1_total_loss(double ce, double cp, double sc, const LossWeights& w) {
  return ce + w.alpha * cp + w.beta * sc;
}

inline double stage2_total_loss(double ce, double rec, double gd, const LossWeights& w) {
  return ce + w.gamma * rec + w.lambda * gd;
}

// ---- Tape ops ---------------------------------------------------------
// Each op evaluates the shared kernel once, caching analytic input gradients;
// backward scales them by the upstream gradient.

inline Var masked_prediction_loss_op(Tape& t, const std::vector<Var>& recon,
                                     const std::vector<Mat>& targets, const Mat& W) {
  std::vector<const Mat*> r;
  for (Var v : recon) r.push_back(&t.value(v));
  std::vector<Mat> grads;
  Mat out(1, 1);
  out(0, 0) = detail::masked_prediction_eval(r, targets, W, &grads);
  return t.push(std::move(out), [&t, recon, grads = std::move(grads)](const Mat& g) {
    for (size_t v = 0; v < recon.size(); ++v) t.grad_ref(recon[v]) += g(0, 0) * grads[v];
  });
}

inline Var semantic_contrastive_loss_op(Tape& t, const std::vector<Var>& preds, const Mat& W,
                                        double tau) {
  std::vector<const Mat*> p;
  for (Var v : preds) p.push_back(&t.value(v));
  std::vector<Mat> grads;
  Mat out(1, 1);
  out(0, 0) = detail::contrastive_eval(p, W, tau, &grads);
  return t.push(std::move(out), [&t, preds, grads = std::move(grads)](const Mat& g) {
    for (size_t v = 0; v < preds.size(); ++v) t.grad_ref(preds[v]) += g(0, 0) * grads[v];
  });
}

inline Var masked_bce_loss_op(Tape& t, Var probs, const Mat& Y, const Mat& G) {
  Mat grad;
  Mat out(1, 1);
  out(0, 0) = detail::masked_bce_eval(t.value(probs), Y, G, &grad);
  return t.push(std::move(out), [&t, probs, grad = std::move(grad)](const Mat& g) {
    t.grad_ref(probs) += g(0, 0) * grad;
  });
}

inline Var graph_disentangling_loss_op(Tape& t, Var cbar, const std::vector<Var>& specifics,
                                       const Mat& W) {
  std::vector<const Mat*> s;
  for (Var v : specifics) s.push_back(&t.value(v));
  Mat gc;
  std::vector<Mat> gs;
  Mat out(1, 1);
  out(0, 0) = detail::graph_disentangle_eval(t.value(cbar), s, W, &gc, &gs);
  return t.push(std::move(out),
                [&t, cbar, specifics, gc = std::move(gc), gs = std::move(gs)](const Mat& g) {
                  t.grad_ref(cbar) += g(0, 0) * gc;
                  for (size_t v = 0; v < specifics.size(); ++v)
                    t.grad_ref(specifics[v]) += g(0, 0) * gs[v];
                });
}

}  // namespace mvfd
