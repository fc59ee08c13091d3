#pragma once

// Parameter groups and forward passes. There are two branches per view:
//  - consistent: encoder -> shared embedding space, cross-view decoders, and a
//    classifier on the indicator-weighted mean embedding;
//  - view-specific: autoencoder whose codes are fused with the consistent
//    embedding (star fusion) and classified by a second head.

#include "mvfd/autodiff.hpp"
#include "mvfd/common.hpp"
#include "mvfd/mlp.hpp"

#include <string>
#include <vector>

namespace mvfd {

inline constexpr double kProbEps = 1e-7;  // classifier outputs live in [eps, 1-eps]

struct ArchConfig {
  int embed_dim = 512;
  int hidden_dim = 1024;
  Activation hidden_activation = Activation::kRelu;
};

struct ModelParams {
  std::vector<int> view_dims;
  int num_labels = 0;
  ArchConfig arch;

  std::vector<Mlp> consistent_encoders;  // d_v -> hidden -> d_e
  std::vector<Mlp> consistent_decoders;  // d_e -> hidden -> d_v
  Mlp shared_classifier;                 // d_e -> c (logits)
  std::vector<Mlp> specific_encoders;    // d_v -> hidden -> d_e
  std::vector<Mlp> specific_decoders;    // d_e -> hidden -> d_v
  Mlp fused_classifier;                  // d_e -> c (logits)

  int num_views() const { return static_cast<int>(view_dims.size()); }

  static ModelParams init(const std::vector<int>& view_dims, int num_labels,
                          const ArchConfig& arch, uint64_t seed) {
    require(!view_dims.empty(), "ModelParams: need at least one view");
    require(num_labels >= 1, "ModelParams: need at least one label");
    require(arch.embed_dim >= 1 && arch.hidden_dim >= 1, "ModelParams: dims must be >= 1");
    ModelParams p;
    p.view_dims = view_dims;
    p.num_labels = num_labels;
    p.arch = arch;
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    auto coder = [&arch](int in, int out) {
      MlpSpec s;
      s.layer_widths = {in, arch.hidden_dim, out};
      s.hidden_activation = arch.hidden_activation;
      s.output_activation = Activation::kIdentity;
      return s;
    };
    for (int d : view_dims) {
      p.consistent_encoders.push_back(Mlp::init(coder(d, arch.embed_dim), rng));
      p.consistent_decoders.push_back(Mlp::init(coder(arch.embed_dim, d), rng));
      p.specific_encoders.push_back(Mlp::init(coder(d, arch.embed_dim), rng));
      p.specific_decoders.push_back(Mlp::init(coder(arch.embed_dim, d), rng));
    }
    MlpSpec head;
    head.layer_widths = {arch.embed_dim, num_labels};
    head.output_activation = Activation::kIdentity;
    p.shared_classifier = Mlp::init(head, rng);
    p.fused_classifier = Mlp::init(head, rng);
    return p;
  }
};

// ---- Plain (non-autodiff) forward ops, used for inference and analysis ----

// Per-row mean over available views; rows must have at least one available.
inline Mat aggregate_available(const std::vector<Mat>& feats, const Mat& W) {
  require(!feats.empty(), "aggregate_available: no views");
  const auto n = feats[0].rows();
  const auto d = feats[0].cols();
  const int m = static_cast<int>(feats.size());
  for (const Mat& f : feats)
    require(f.rows() == n && f.cols() == d, "aggregate_available: view shapes disagree");
  require(W.rows() == n && W.cols() == m, "aggregate_available: indicator shape mismatch");
  Mat out = Mat::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    int k = 0;
    for (int v = 0; v < m; ++v) {
      if (W(i, v) != 0.0) {
        out.row(i) += feats[static_cast<size_t>(v)].row(i);
        ++k;
      }
    }
    require(k > 0, "aggregate_available: row " + std::to_string(i) + " has no available view");
    out.row(i) *= 1.0 / static_cast<double>(k);  // same arithmetic as the tape op
  }
  return out;
}

// Logistic over classifier logits, clamped to [kProbEps, 1 - kProbEps] so
// downstream logs stay finite even for saturated logits.
inline Mat classify(const Mlp& classifier, const Mat& features) {
  Mat logits = classifier.forward(features);
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double s = Tape::stable_logistic(logits(i));
    out(i) = std::min(std::max(s, kProbEps), 1.0 - kProbEps);
  }
  return out;
}

// Z = logistic(S) .* C, elementwise.
inline Mat star_fuse(const Mat& sbar, const Mat& cbar) {
  require(sbar.rows() == cbar.rows() && sbar.cols() == cbar.cols(), "star_fuse: shape mismatch");
  Mat out(sbar.rows(), sbar.cols());
  for (Eigen::Index i = 0; i < sbar.size(); ++i)
    out(i) = Tape::stable_logistic(sbar(i)) * cbar(i);
  return out;
}

inline std::vector<Mat> encode_each(const std::vector<Mlp>& encoders,
                                    const std::vector<Mat>& views) {
  require(encoders.size() == views.size(), "encode_each: encoder/view count mismatch");
  std::vector<Mat> out;
  out.reserve(views.size());
  for (size_t v = 0; v < views.size(); ++v) out.push_back(encoders[v].forward(views[v]));
  return out;
}

// Cross-view decoding: every view is predicted from the aggregated embedding.
inline std::vector<Mat> decode_each(const std::vector<Mlp>& decoders, const Mat& embedding) {
  std::vector<Mat> out;
  out.reserve(decoders.size());
  for (const Mlp& d : decoders) out.push_back(d.forward(embedding));
  return out;
}

// Everything one forward pass can produce. Builders fill only what the
// requested branch computes; unused members stay empty.
struct EmbeddingBatch {
  std::vector<Mat> consistent;       // per view, n x d_e
  Mat consistent_agg;                // n x d_e
  std::vector<Mat> reconstructions;  // per view, n x d_v (cross-view or specific)
  std::vector<Mat> specific;         // per view, n x d_e
  Mat specific_agg;                  // n x d_e
  Mat fused;                         // n x d_e
  Mat predictions;                   // n x c in (0,1)
};

// First-stage forward on (typically masked) inputs: consistent embeddings,
// aggregation, cross-view reconstructions, shared-classifier predictions.
inline EmbeddingBatch forward_stage1(const ModelParams& p, const std::vector<Mat>& inputs,
                                     const Mat& W) {
  EmbeddingBatch b;
  b.consistent = encode_each(p.consistent_encoders, inputs);
  b.consistent_agg = aggregate_available(b.consistent, W);
  b.reconstructions = decode_each(p.consistent_decoders, b.consistent_agg);
  b.predictions = classify(p.shared_classifier, b.consistent_agg);
  return b;
}

// Second-stage forward on unmasked inputs: consistent aggregation (frozen
// branch), specific autoencoders, star fusion, fused-classifier predictions.
inline EmbeddingBatch forward_stage2(const ModelParams& p, const std::vector<Mat>& inputs,
                                     const Mat& W) {
  EmbeddingBatch b;
  b.consistent = encode_each(p.consistent_encoders, inputs);
  b.consistent_agg = aggregate_available(b.consistent, W);
  b.specific = encode_each(p.specific_encoders, inputs);
  b.specific_agg = aggregate_available(b.specific, W);
  for (size_t v = 0; v < inputs.size(); ++v)
    b.reconstructions.push_back(p.specific_decoders[v].forward(b.specific[v]));
  b.fused = star_fuse(b.specific_agg, b.consistent_agg);
  b.predictions = classify(p.fused_classifier, b.fused);
  return b;
}

// Inference path: identical to the second-stage forward.
inline Mat predict(const ModelParams& p, const std::vector<Mat>& views, const Mat& W) {
  return forward_stage2(p, views, W).predictions;
}

}  // namespace mvfd
