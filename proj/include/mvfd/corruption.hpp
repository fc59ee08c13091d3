#pragma once

// Turns a complete multi-view dataset into a benchmark-style incomplete one:
// per view, a fixed fraction of samples loses that view; rows that lose every
// view get one view restored at random; per label column, a fixed fraction of
// entries becomes unobserved, removed proportionally from positives and
// negatives so the observed prevalence is preserved. Finally the rows are
// split into train/test. Test rows keep the corrupted views (and W) but their
// labels are fully observed, so evaluation is never against masked targets.

#include "mvfd/common.hpp"
#include "mvfd/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mvfd {

struct CorruptionSpec {
  double view_missing_rate = 0.5;
  double label_missing_rate = 0.5;
  double train_fraction = 0.7;
  uint64_t seed = 0;

  void validate() const {
    require(view_missing_rate >= 0.0 && view_missing_rate < 1.0,
            "CorruptionSpec: view_missing_rate must lie in [0, 1)");
    require(label_missing_rate >= 0.0 && label_missing_rate < 1.0,
            "CorruptionSpec: label_missing_rate must lie in [0, 1)");
    require(train_fraction > 0.0 && train_fraction < 1.0,
            "CorruptionSpec: train_fraction must lie in (0, 1)");
  }
};

struct SplitDatasets {
  MultiViewDataset train;
  MultiViewDataset test;
};

inline SplitDatasets simulate_incompleteness(const MultiViewDataset& complete,
                                             const CorruptionSpec& spec) {
  spec.validate();
  complete.validate();
  require(complete.view_indicator.isOnes(0.0) && complete.label_indicator.isOnes(0.0),
          "simulate_incompleteness: input must be complete (all indicators 1)");

  const int64_t n = complete.n();
  const int m = complete.num_views();
  const int c = complete.num_labels();
  Rng rng(spec.seed);

  // 1. Disable exactly floor(n * rate) samples per view.
  Mat W = Mat::Ones(n, m);
  const auto k_view = static_cast<int64_t>(static_cast<double>(n) * spec.view_missing_rate);
  for (int v = 0; v < m; ++v) {
    for (int64_t i : rng.sample_without_replacement(n, k_view)) W(i, v) = 0.0;
  }
  // 2. Repair rows that lost everything: re-enable one uniformly random view.
  for (int64_t i = 0; i < n; ++i) {
    if (W.row(i).sum() == 0.0) W(i, rng.uniform_int(0, m - 1)) = 1.0;
  }

  // 3. Zero-fill the features of disabled views.
  std::vector<Mat> views = complete.views;
  for (int v = 0; v < m; ++v) {
    for (int64_t i = 0; i < n; ++i) {
      if (W(i, v) == 0.0) views[static_cast<size_t>(v)].row(i).setZero();
    }
  }

  // 4. Remove floor(n * rate) label entries per column, stratified by class so
  //    the observed positive rate matches the full column's.
  Mat G = Mat::Ones(n, c);
  Mat Y = complete.labels;
  const auto k_label = static_cast<int64_t>(static_cast<double>(n) * spec.label_missing_rate);
  for (int j = 0; j < c; ++j) {
    std::vector<int64_t> pos, neg;
    for (int64_t i = 0; i < n; ++i) (complete.labels(i, j) == 1.0 ? pos : neg).push_back(i);
    const auto n_pos = static_cast<int64_t>(pos.size());
    const auto n_neg = static_cast<int64_t>(neg.size());
    int64_t k_pos = std::llround(static_cast<double>(k_label) * static_cast<double>(n_pos) /
                                 static_cast<double>(n));
    k_pos = std::clamp(k_pos, std::max<int64_t>(0, k_label - n_neg), std::min(k_label, n_pos));
    const int64_t k_neg = k_label - k_pos;
    auto hide = [&](const std::vector<int64_t>& rows, int64_t k) {
      std::vector<int64_t> shuffled = rows;
      rng.shuffle(shuffled);
      for (int64_t t = 0; t < k; ++t) {
        const int64_t i = shuffled[static_cast<size_t>(t)];
        G(i, j) = 0.0;
        Y(i, j) = 0.0;
      }
    };
    hide(pos, k_pos);
    hide(neg, k_neg);
  }

  // 5. Train/test split: floor(n * train_fraction) rows to train. Row order
  //    within each split follows the original dataset.
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  const auto n_train = static_cast<int64_t>(static_cast<double>(n) * spec.train_fraction);
  require(n_train >= 1 && n_train < n,
          "simulate_incompleteness: train_fraction leaves an empty split");
  std::vector<int64_t> train_rows(perm.begin(), perm.begin() + n_train);
  std::vector<int64_t> test_rows(perm.begin() + n_train, perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  MultiViewDataset corrupted;
  corrupted.meta = complete.meta;
  corrupted.views = std::move(views);
  corrupted.labels = Y;
  corrupted.view_indicator = W;
  corrupted.label_indicator = G;

  SplitDatasets out;
  out.train = take_rows(corrupted, train_rows);
  out.test = take_rows(corrupted, test_rows);
  // Test supervision is complete: original labels, G = 1.
  out.test.labels = take_rows(complete, test_rows).labels;
  out.test.label_indicator = Mat::Ones(static_cast<int64_t>(test_rows.size()), c);

  const std::string tag = " [corrupted: view_missing=" + std::to_string(spec.view_missing_rate) +
                          ", label_missing=" + std::to_string(spec.label_missing_rate) +
                          ", train_fraction=" + std::to_string(spec.train_fraction) +
                          ", seed=" + std::to_string(spec.seed) + "]";
  out.train.meta.provenance += tag + " split=train";
  out.test.meta.provenance += tag + " split=test";
  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace mvfd
