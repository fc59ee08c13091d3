#pragma once

// Random feature masking used by the first training stage. Each view row gets
// exactly one contiguous run of floor(d_v * ratio) zeros at a uniform offset;
// everything else is 1. Masks are resampled every epoch and never touch
// evaluation data.

#include "mvfd/common.hpp"

#include <string>
#include <vector>

namespace mvfd {

struct FeatureMaskSet {
  std::vector<Mat> masks;  // one n x d_v binary matrix per view
  double mask_ratio = 0.0;
  uint64_t seed = 0;
};

inline FeatureMaskSet sample_feature_masks(const std::vector<int>& view_dims, int64_t n,
                                           double mask_ratio, uint64_t seed) {
  require(n >= 1, "sample_feature_masks: need n >= 1");
  require(!view_dims.empty(), "sample_feature_masks: need at least one view");
  require(mask_ratio >= 0.0 && mask_ratio <= 1.0,
          "sample_feature_masks: mask_ratio must lie in [0, 1]");
  FeatureMaskSet set;
  set.mask_ratio = mask_ratio;
  set.seed = seed;
  Rng rng(seed);
  for (size_t v = 0; v < view_dims.size(); ++v) {
    const int d = view_dims[v];
    require(d >= 1, "sample_feature_masks: view " + std::to_string(v) + " has no features");
    const int run = static_cast<int>(static_cast<double>(d) * mask_ratio);
    Mat mask = Mat::Ones(n, d);
    for (int64_t i = 0; i < n; ++i) {
      if (run == 0) continue;
      const int start = static_cast<int>(rng.uniform_int(0, d - run));
      mask.row(i).segment(start, run).setZero();
    }
    set.masks.push_back(std::move(mask));
  }
  return set;
}

// Elementwise product view-by-view; shapes must match exactly.
inline std::vector<Mat> apply_masks(const std::vector<Mat>& views, const FeatureMaskSet& set) {
  require(views.size() == set.masks.size(), "apply_masks: view/mask count mismatch");
  std::vector<Mat> out;
  out.reserve(views.size());
  for (size_t v = 0; v < views.size(); ++v) {
    require(views[v].rows() == set.masks[v].rows() && views[v].cols() == set.masks[v].cols(),
            "apply_masks: shape mismatch on view " + std::to_string(v));
    out.push_back(views[v].cwiseProduct(set.masks[v]));
  }
  return out;
}

}  // namespace mvfd
