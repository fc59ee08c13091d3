#pragma once

// Synthetic multi-view benchmark. A correlated shared latent drives every
// view; each view observes a sliding window of latent coordinates through a
// random linear map, plus low-rank view-private factors and isotropic noise.
// Labels threshold dense linear functionals of the full latent, so every view
// sees only part of the label-relevant signal and the views are genuinely
// complementary: cross-view structure must be learned to classify samples
// with missing views, and each view carries private variation for the
// specific branch to absorb. Generated datasets are complete; corrupt them
// with simulate_incompleteness.

#include "mvfd/common.hpp"
#include "mvfd/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mvfd {

struct SyntheticSpec {
  int64_t n = 2000;
  int latent_dim = 8;
  int num_labels = 5;
  std::vector<int> view_dims = {16, 24};
  double noise = 1.0;          // isotropic per-feature noise
  double latent_corr = 0.8;    // AR(1) correlation between adjacent latent dims
  int view_window = 5;         // latent dims visible to each view (clamped to latent_dim)
  int private_dim = 2;         // rank of the view-private factor structure
  double private_scale = 1.0;  // strength of the private factors
  uint64_t seed = 0;

  void validate() const {
    require(n >= 1, "SyntheticSpec: n must be >= 1");
    require(latent_dim >= 1, "SyntheticSpec: latent_dim must be >= 1");
    require(num_labels >= 1, "SyntheticSpec: num_labels must be >= 1");
    require(!view_dims.empty(), "SyntheticSpec: need at least one view");
    for (int d : view_dims) require(d >= 1, "SyntheticSpec: view dims must be >= 1");
    require(noise >= 0.0, "SyntheticSpec: noise must be nonnegative");
    require(latent_corr > -1.0 && latent_corr < 1.0,
            "SyntheticSpec: latent_corr must lie in (-1, 1)");
    require(view_window >= 1, "SyntheticSpec: view_window must be >= 1");
    require(private_dim >= 0, "SyntheticSpec: private_dim must be nonnegative");
    require(private_scale >= 0.0, "SyntheticSpec: private_scale must be nonnegative");
  }
};

inline MultiViewDataset make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0x73796e74ULL));  // "synt"

  // Unit-variance AR(1) latent: adjacent dims correlate at latent_corr, so a
  // view's visible window carries information about the dims it cannot see.
  Mat latent(spec.n, spec.latent_dim);
  const double carry = spec.latent_corr;
  const double fresh = std::sqrt(1.0 - carry * carry);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    latent(i, 0) = rng.normal();
    for (int j = 1; j < spec.latent_dim; ++j)
      latent(i, j) = carry * latent(i, j - 1) + fresh * rng.normal();
  }

  // Evenly spread window starts so views overlap but none sees everything
  // (unless the window covers the whole latent).
  const auto m = static_cast<int>(spec.view_dims.size());
  const int window = std::min(spec.view_window, spec.latent_dim);
  const int span_room = spec.latent_dim - window;
  std::vector<int> starts(static_cast<size_t>(m), 0);
  for (int v = 0; v < m; ++v)
    if (m > 1)
      starts[static_cast<size_t>(v)] = static_cast<int>(
          std::lround(static_cast<double>(span_room) * v / static_cast<double>(m - 1)));

  MultiViewDataset ds;
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(window));
  for (int v = 0; v < m; ++v) {
    const int d_v = spec.view_dims[static_cast<size_t>(v)];
    Mat A(window, d_v);
    for (Eigen::Index i = 0; i < A.size(); ++i) A(i) = map_scale * rng.normal();
    Mat x = latent.middleCols(starts[static_cast<size_t>(v)], window) * A;
    if (spec.private_dim > 0 && spec.private_scale > 0.0) {
      Mat factors(spec.n, spec.private_dim);
      for (Eigen::Index i = 0; i < factors.size(); ++i) factors(i) = rng.normal();
      Mat B(spec.private_dim, d_v);
      const double priv_scale =
          spec.private_scale / std::sqrt(static_cast<double>(spec.private_dim));
      for (Eigen::Index i = 0; i < B.size(); ++i) B(i) = priv_scale * rng.normal();
      x += factors * B;
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += spec.noise * rng.normal();
    ds.views.push_back(std::move(x));
    ds.meta.view_names.push_back("view" + std::to_string(v));
  }

  // Labels are dense linear functionals of the full latent, so every label
  // depends on dims outside each single view's window.
  Mat U(spec.latent_dim, spec.num_labels);
  for (Eigen::Index i = 0; i < U.size(); ++i) U(i) = rng.normal();
  const Mat scores = latent * U;
  ds.labels = Mat::Zero(spec.n, spec.num_labels);
  for (Eigen::Index i = 0; i < scores.size(); ++i) ds.labels(i) = scores(i) > 0.0 ? 1.0 : 0.0;

  ds.view_indicator = Mat::Ones(spec.n, static_cast<Eigen::Index>(spec.view_dims.size()));
  ds.label_indicator = Mat::Ones(spec.n, spec.num_labels);
  ds.meta.provenance = "synthetic shared-latent benchmark (latent_dim=" +
                       std::to_string(spec.latent_dim) + ", noise=" + std::to_string(spec.noise) +
                       ", seed=" + std::to_string(spec.seed) + ")";
  ds.validate();
  return ds;
}

}  // namespace mvfd
