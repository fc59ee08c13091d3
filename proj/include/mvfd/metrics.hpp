#pragma once

// Multi-label ranking metrics, all reported in higher-is-better form.
// Conventions (shared with the brute-force oracle in the test suite):
//  - tied scores get their average rank (AP, coverage);
//  - ranking loss counts a (relevant, irrelevant) tie as mis-ordered;
//  - AUC credits a tie 0.5;
//  - the top label for one-error is the first index attaining the maximum;
//  - Hamming predictions threshold at 0.5 (score >= 0.5 means positive).
// Per-row applicability: AP/coverage need a positive label, ranking loss and
// AUC need both a positive and a negative; Hamming and one-error use every
// row. A metric with zero evaluable rows is an error.

#include "mvfd/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mvfd {

struct MetricsReport {
  double average_precision = 0.0;   // AP
  double one_minus_hamming = 0.0;   // 1 - HL
  double one_minus_ranking = 0.0;   // 1 - RL
  double auc = 0.0;                 // AUC
  double one_minus_one_error = 0.0; // 1 - OE
  double one_minus_coverage = 0.0;  // 1 - Cov, coverage normalized by c

  nlohmann::json to_json() const {
    return {{"AP", average_precision},       {"one_minus_HL", one_minus_hamming},
            {"one_minus_RL", one_minus_ranking}, {"AUC", auc},
            {"one_minus_OE", one_minus_one_error}, {"one_minus_Cov", one_minus_coverage}};
  }
};

inline MetricsReport evaluate(const Mat& scores, const Mat& labels) {
  const Eigen::Index n = scores.rows();
  const Eigen::Index c = scores.cols();
  require(n >= 1 && c >= 1, "evaluate: need at least one row and one label");
  require(labels.rows() == n && labels.cols() == c, "evaluate: score/label shape mismatch");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    require(labels(i) == 0.0 || labels(i) == 1.0, "evaluate: labels must be 0/1");
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    require(std::isfinite(scores(i)), "evaluate: scores must be finite");

  double ap_sum = 0.0, cov_sum = 0.0, rl_sum = 0.0, auc_sum = 0.0;
  int64_t ap_rows = 0, rl_rows = 0;
  int64_t hamming_errors = 0, one_errors = 0;

  std::vector<int> order(static_cast<size_t>(c));
  for (Eigen::Index i = 0; i < n; ++i) {
    int64_t n_rel = 0;
    for (Eigen::Index j = 0; j < c; ++j) {
      if (labels(i, j) == 1.0) ++n_rel;
      const bool predicted = scores(i, j) >= 0.5;
      if (predicted != (labels(i, j) == 1.0)) ++hamming_errors;
    }
    const int64_t n_irr = c - n_rel;

    // One-error: first index attaining the row maximum.
    Eigen::Index top = 0;
    for (Eigen::Index j = 1; j < c; ++j) {
      if (scores(i, j) > scores(i, top)) top = j;
    }
    if (labels(i, top) == 0.0) ++one_errors;

    if (n_rel == 0) continue;  // rank-based metrics need a positive

    for (Eigen::Index j = 0; j < c; ++j) order[static_cast<size_t>(j)] = static_cast<int>(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores(i, a) > scores(i, b); });

    // Walk tie groups in descending score order.
    double ap = 0.0;
    double deepest_relevant_rank = 0.0;
    int64_t rel_before = 0, irr_before = 0;
    int64_t mis_pairs = 0;
    double correct_pairs = 0.0;
    size_t g = 0;
    while (g < order.size()) {
      size_t h = g;
      while (h < order.size() &&
             scores(i, order[h]) == scores(i, order[g]))
        ++h;
      const auto t = static_cast<int64_t>(h - g);
      int64_t t_rel = 0;
      for (size_t kk = g; kk < h; ++kk) {
        if (labels(i, order[kk]) == 1.0) ++t_rel;
      }
      const int64_t t_irr = t - t_rel;
      const double avg_rank = static_cast<double>(g + 1) + static_cast<double>(t - 1) / 2.0;
      if (t_rel > 0) {
        ap += static_cast<double>(t_rel) * static_cast<double>(rel_before + t_rel) / avg_rank;
        deepest_relevant_rank = avg_rank;
        // Each relevant label in the group sees irr_before irrelevants ranked
        // strictly above it and t_irr tied with it.
        mis_pairs += t_rel * (irr_before + t_irr);
        correct_pairs += static_cast<double>(t_rel) *
                         (static_cast<double>(n_irr - irr_before - t_irr) +
                          0.5 * static_cast<double>(t_irr));
      }
      rel_before += t_rel;
      irr_before += t_irr;
      g = h;
    }

    ap_sum += ap / static_cast<double>(n_rel);
    cov_sum += (deepest_relevant_rank - 1.0) / static_cast<double>(c);
    ++ap_rows;
    if (n_irr > 0) {
      const double pairs = static_cast<double>(n_rel) * static_cast<double>(n_irr);
      rl_sum += static_cast<double>(mis_pairs) / pairs;
      auc_sum += correct_pairs / pairs;
      ++rl_rows;
    }
  }

  require(ap_rows > 0, "evaluate: no row has a positive label (AP/coverage undefined)");
  require(rl_rows > 0,
          "evaluate: no row has both a positive and a negative label (RL/AUC undefined)");

  MetricsReport r;
  r.average_precision = ap_sum / static_cast<double>(ap_rows);
  r.one_minus_coverage = 1.0 - cov_sum / static_cast<double>(ap_rows);
  r.one_minus_ranking = 1.0 - rl_sum / static_cast<double>(rl_rows);
  r.auc = auc_sum / static_cast<double>(rl_rows);
  r.one_minus_hamming =
      1.0 - static_cast<double>(hamming_errors) / (static_cast<double>(n) * static_cast<double>(c));
  r.one_minus_one_error = 1.0 - static_cast<double>(one_errors) / static_cast<double>(n);
  return r;
}

}  // namespace mvfd
