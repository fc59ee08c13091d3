#pragma once

// Reverse-mode autodiff over dense row-major matrices. A Tape owns the graph
// for a single forward/backward pass; Vars are indices into it. Besides the
// generic neural-net ops there are fused ops for the indicator-weighted
// aggregations and losses used by the model. Every fused op *skips* entries
// whose indicator is zero rather than multiplying by it, so both the value and
// the gradients are bit-for-bit independent of masked-out content.

#include "mvfd/common.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace mvfd {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  // Nodes hold closures that reference the owning tape; pinning the object is
  // simpler than rebinding them.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat& value(Var v) const { return nodes_[check(v)].value; }
  const Mat& grad(Var v) const { return nodes_[check(v)].grad; }
  Mat& grad_ref(Var v) { return nodes_[check(v)].grad; }

  Var leaf(Mat value) { return push(std::move(value), nullptr); }

  Var matmul(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    require(A.cols() == B.rows(), "matmul: inner dimensions disagree");
    Mat out = A * B;
    return push(std::move(out), [this, a, b](const Mat& g) {
      nodes_[a.id].grad.noalias() += g * nodes_[b.id].value.transpose();
      nodes_[b.id].grad.noalias() += nodes_[a.id].value.transpose() * g;
    });
  }

  // Adds a 1 x k bias row to every row of a.
  Var add_bias(Var a, Var bias) {
    const Mat& A = value(a);
    const Mat& B = value(bias);
    require(B.rows() == 1 && B.cols() == A.cols(), "add_bias: bias must be 1 x cols(a)");
    Mat out = A.rowwise() + B.row(0);
    return push(std::move(out), [this, a, bias](const Mat& g) {
      nodes_[a.id].grad += g;
      nodes_[bias.id].grad.row(0) += g.colwise().sum();
    });
  }

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(0.0);
    return push(std::move(out), [this, a](const Mat& g) {
      const Mat& x = nodes_[a.id].value;
      nodes_[a.id].grad.array() += g.array() * (x.array() > 0.0).cast<double>();
    });
  }

  Var tanh_(Var a) {
    Mat out = value(a).array().tanh().matrix();
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].pull = [this, a, r](const Mat& g) {
      const Mat& y = nodes_[r.id].value;
      nodes_[a.id].grad.array() += g.array() * (1.0 - y.array().square());
    };
    return r;
  }

  // Numerically stable logistic, optionally clamped to [eps, 1-eps]. The
  // derivative is zero wherever the clamp is active.
  Var sigmoid(Var a, double clamp_eps = 0.0) {
    const Mat& x = value(a);
    Mat raw(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) raw(i) = stable_logistic(x(i));
    Mat out = raw;
    if (clamp_eps > 0.0) {
      out = out.cwiseMax(clamp_eps).cwiseMin(1.0 - clamp_eps);
    }
    return push(std::move(out), [this, a, raw = std::move(raw), clamp_eps](const Mat& g) {
      Mat& ga = nodes_[a.id].grad;
      for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const double s = raw(i);
        const bool clamped = clamp_eps > 0.0 && (s < clamp_eps || s > 1.0 - clamp_eps);
        if (!clamped) ga(i) += g(i) * s * (1.0 - s);
      }
    });
  }

  // Scalar ops (all operands 1 x 1). weighted_sum is the workhorse for
  // assembling loss totals.
  Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
    require(!terms.empty(), "weighted_sum: no terms");
    double total = 0.0;
    for (const auto& [v, w] : terms) {
      require(value(v).size() == 1, "weighted_sum: operands must be scalar");
      total += w * value(v)(0, 0);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), [this, terms](const Mat& g) {
      for (const auto& [v, w] : terms) nodes_[v.id].grad(0, 0) += w * g(0, 0);
    });
  }

  // ---- Fused domain ops -----------------------------------------------

  // Per-row mean of the available views: out_i = sum_{v: W(i,v)=1} F_v(i) / k_i.
  // Rows with no available view are a contract violation.
  Var aggregate_available(const std::vector<Var>& views, const Mat& W) {
    require(!views.empty(), "aggregate_available: no views");
    const int m = static_cast<int>(views.size());
    const Eigen::Index n = value(views[0]).rows();
    const Eigen::Index d = value(views[0]).cols();
    for (const Var& v : views)
      require(value(v).rows() == n && value(v).cols() == d,
              "aggregate_available: view shapes disagree");
    require(W.rows() == n && W.cols() == m, "aggregate_available: indicator shape mismatch");
    Mat out = Mat::Zero(n, d);
    std::vector<double> inv_k(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      int k = 0;
      for (int v = 0; v < m; ++v) {
        if (W(i, v) != 0.0) {
          out.row(i) += value(views[static_cast<size_t>(v)]).row(i);
          ++k;
        }
      }
      require(k > 0, "aggregate_available: row " + std::to_string(i) + " has no available view");
      inv_k[static_cast<size_t>(i)] = 1.0 / k;
      out.row(i) *= inv_k[static_cast<size_t>(i)];
    }
    return push(std::move(out), [this, views, W, inv_k = std::move(inv_k)](const Mat& g) {
      const int m2 = static_cast<int>(views.size());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (int v = 0; v < m2; ++v) {
          if (W(i, v) != 0.0)
            nodes_[views[static_cast<size_t>(v)].id].grad.row(i) +=
                inv_k[static_cast<size_t>(i)] * g.row(i);
        }
      }
    });
  }

  // Elementwise star fusion: Z = logistic(S) .* C.
  Var star_fuse(Var sbar, Var cbar) {
    const Mat& S = value(sbar);
    const Mat& C = value(cbar);
    require(S.rows() == C.rows() && S.cols() == C.cols(), "star_fuse: shape mismatch");
    Mat sig(S.rows(), S.cols());
    for (Eigen::Index i = 0; i < S.size(); ++i) sig(i) = stable_logistic(S(i));
    Mat out = sig.cwiseProduct(C);
    return push(std::move(out), [this, sbar, cbar, sig = std::move(sig)](const Mat& g) {
      const Mat& C = nodes_[cbar.id].value;
      nodes_[sbar.id].grad.array() +=
          g.array() * sig.array() * (1.0 - sig.array()) * C.array();
      nodes_[cbar.id].grad.array() += g.array() * sig.array();
    });
  }

  // Backpropagates from a scalar root. Gradients accumulate into .grad of
  // every node; read them off leaf Vars afterwards.
  void backward(Var root) {
    require(value(root).size() == 1, "backward: root must be a scalar");
    for (auto& n : nodes_) n.grad.setZero();
    nodes_[root.id].grad(0, 0) = 1.0;
    for (int i = root.id; i >= 0; --i) {
      if (nodes_[i].pull && nodes_[i].grad.size() > 0) nodes_[i].pull(nodes_[i].grad);
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }

  Var push(Mat value, std::function<void(const Mat&)> pull) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  static double stable_logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(const Mat&)> pull;  // null for leaves
  };

  int check(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "Tape: invalid Var");
    return v.id;
  }

  std::vector<Node> nodes_;
};

}  // namespace mvfd
