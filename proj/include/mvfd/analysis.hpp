#pragma once

// Post-hoc analysis: per-sample embedding correlation heat maps, hyperparameter
// grid sweeps, and the standard ablation suite. Sweeps and ablations train
// full models per cell, so they accept a thread count; cells are independent
// and results land in preallocated slots, keeping output deterministic.

#include "mvfd/common.hpp"
#include "mvfd/data.hpp"
#include "mvfd/losses.hpp"
#include "mvfd/metrics.hpp"
#include "mvfd/model.hpp"
#include "mvfd/train.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace mvfd {

// Cosine-similarity matrix between a sample's 2m embedding vectors (consistent
// then specific, per view). Rows of missing views are NaN; the diagonal of
// available rows is exactly 1.
struct HeatMap {
  int64_t sample_index = 0;
  std::vector<std::string> row_names;  // C<view>, then S<view>
  std::vector<bool> available;
  Mat H;  // 2m x 2m in [-1, 1], NaN on missing rows/cols
};

inline HeatMap compute_heatmap(const ModelParams& params, const MultiViewDataset& ds,
                               int64_t sample_index) {
  require(sample_index >= 0 && sample_index < ds.n(),
          "compute_heatmap: sample index " + std::to_string(sample_index) + " out of range [0, " +
              std::to_string(ds.n()) + ")");
  require(params.view_dims == ds.view_dims(), "compute_heatmap: model/dataset view dims disagree");
  const int m = ds.num_views();
  HeatMap hm;
  hm.sample_index = sample_index;

  // Embed the single sample through both branches.
  std::vector<Mat> rows;  // 2m x d_e, garbage rows for missing views
  for (int v = 0; v < m; ++v) {
    const Mat x = ds.views[static_cast<size_t>(v)].row(sample_index);
    rows.push_back(params.consistent_encoders[static_cast<size_t>(v)].forward(x));
    hm.row_names.push_back("C" + std::to_string(v));
    hm.available.push_back(ds.view_indicator(sample_index, v) != 0.0);
  }
  for (int v = 0; v < m; ++v) {
    const Mat x = ds.views[static_cast<size_t>(v)].row(sample_index);
    rows.push_back(params.specific_encoders[static_cast<size_t>(v)].forward(x));
    hm.row_names.push_back("S" + std::to_string(v));
    hm.available.push_back(ds.view_indicator(sample_index, v) != 0.0);
  }

  Mat O(2 * m, params.arch.embed_dim);
  for (int r = 0; r < 2 * m; ++r) O.row(r) = rows[static_cast<size_t>(r)].row(0);
  const auto nr = detail::normalize_rows(O);
  hm.H = nr.R * nr.R.transpose();
  for (int r = 0; r < 2 * m; ++r) {
    for (int s = 0; s < 2 * m; ++s) {
      if (!hm.available[static_cast<size_t>(r)] || !hm.available[static_cast<size_t>(s)]) {
        hm.H(r, s) = std::numeric_limits<double>::quiet_NaN();
      } else if (r == s) {
        hm.H(r, s) = 1.0;  // cos(x, x) by definition
      } else {
        hm.H(r, s) = std::min(1.0, std::max(-1.0, hm.H(r, s)));
      }
    }
  }
  return hm;
}

inline void write_heatmap_csv(const HeatMap& hm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  io_require(out.good(), "cannot open '" + path.string() + "' for writing");
  out << "name";
  for (const auto& n : hm.row_names) out << "," << n;
  out << "\n";
  out.precision(17);
  for (Eigen::Index r = 0; r < hm.H.rows(); ++r) {
    out << hm.row_names[static_cast<size_t>(r)];
    for (Eigen::Index s = 0; s < hm.H.cols(); ++s) {
      if (std::isnan(hm.H(r, s))) {
        out << ",nan";
      } else {
        out << "," << hm.H(r, s);
      }
    }
    out << "\n";
  }
  io_require(out.good(), "short write to '" + path.string() + "'");
}

// 8-bit binary PGM; [-1, 1] maps to [0, 255], missing cells to 0. Each cell
// becomes a scale x scale pixel block.
inline void write_heatmap_pgm(const HeatMap& hm, const std::filesystem::path& path,
                              int scale = 32) {
  require(scale >= 1, "write_heatmap_pgm: scale must be >= 1");
  const auto side = static_cast<int>(hm.H.rows()) * scale;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  io_require(out.good(), "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << side << " " << side << "\n255\n";
  for (Eigen::Index r = 0; r < hm.H.rows(); ++r) {
    std::string row_bytes;
    for (Eigen::Index s = 0; s < hm.H.cols(); ++s) {
      unsigned char px = 0;
      const double v = hm.H(r, s);
      if (!std::isnan(v)) px = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
      row_bytes.append(static_cast<size_t>(scale), static_cast<char>(px));
    }
    for (int rep = 0; rep < scale; ++rep)
      out.write(row_bytes.data(), static_cast<std::streamsize>(row_bytes.size()));
  }
  io_require(out.good(), "short write to '" + path.string() + "'");
}

// ---- Grid sweep ---------------------------------------------------------

struct GridAxis {
  std::string name;  // alpha|beta|gamma|lambda|tau|mask_ratio|learning_rate
  std::vector<double> values;
};

inline void apply_axis_value(TrainConfig& cfg, const std::string& name, double value) {
  if (name == "alpha") cfg.weights.alpha = value;
  else if (name == "beta") cfg.weights.beta = value;
  else if (name == "gamma") cfg.weights.gamma = value;
  else if (name == "lambda") cfg.weights.lambda = value;
  else if (name == "tau") cfg.weights.tau = value;
  else if (name == "mask_ratio" || name == "delta") cfg.mask_ratio = value;
  else if (name == "learning_rate" || name == "lr") cfg.learning_rate = value;
  else
    throw ValidationError("grid axis '" + name +
                          "' is not sweepable (expected alpha|beta|gamma|lambda|tau|mask_ratio|learning_rate)");
}

struct GridResult {
  GridAxis axis1, axis2;
  std::vector<std::vector<MetricsReport>> cells;  // [i][j] for axis1[i], axis2[j]
};

// Full factorial: trains one model per cell with the base config's seed.
inline GridResult grid_sweep(const MultiViewDataset& train, const MultiViewDataset& test,
                             const TrainConfig& base, const GridAxis& axis1, const GridAxis& axis2,
                             int jobs = 1) {
  require(!axis1.values.empty() && !axis2.values.empty(), "grid_sweep: empty axis");
  {  // validate axis names and value compatibility up front
    TrainConfig probe = base;
    apply_axis_value(probe, axis1.name, axis1.values[0]);
    apply_axis_value(probe, axis2.name, axis2.values[0]);
    probe.validate();
  }
  GridResult grid;
  grid.axis1 = axis1;
  grid.axis2 = axis2;
  const size_t n1 = axis1.values.size(), n2 = axis2.values.size();
  grid.cells.assign(n1, std::vector<MetricsReport>(n2));
  parallel_for(static_cast<int64_t>(n1 * n2), jobs, [&](int64_t cell) {
    const size_t i = static_cast<size_t>(cell) / n2;
    const size_t j = static_cast<size_t>(cell) % n2;
    TrainConfig cfg = base;
    apply_axis_value(cfg, axis1.name, axis1.values[i]);
    apply_axis_value(cfg, axis2.name, axis2.values[j]);
    cfg.validate();
    const TrainResult r = train_full(train, cfg);
    grid.cells[i][j] = evaluate(predict(r.params, test), test.labels);
  });
  return grid;
}

inline void write_grid_csv(const GridResult& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  io_require(out.good(), "cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << grid.axis1.name << "," << grid.axis2.name
      << ",AP,one_minus_HL,one_minus_RL,AUC,one_minus_OE,one_minus_Cov\n";
  for (size_t i = 0; i < grid.axis1.values.size(); ++i) {
    for (size_t j = 0; j < grid.axis2.values.size(); ++j) {
      const MetricsReport& r = grid.cells[i][j];
      out << grid.axis1.values[i] << "," << grid.axis2.values[j] << "," << r.average_precision
          << "," << r.one_minus_hamming << "," << r.one_minus_ranking << "," << r.auc << ","
          << r.one_minus_one_error << "," << r.one_minus_coverage << "\n";
    }
  }
  io_require(out.good(), "short write to '" + path.string() + "'");
}

inline nlohmann::json grid_to_json(const GridResult& grid) {
  nlohmann::json cells = nlohmann::json::array();
  for (size_t i = 0; i < grid.axis1.values.size(); ++i) {
    for (size_t j = 0; j < grid.axis2.values.size(); ++j) {
      nlohmann::json cell = grid.cells[i][j].to_json();
      cell[grid.axis1.name] = grid.axis1.values[i];
      cell[grid.axis2.name] = grid.axis2.values[j];
      cells.push_back(std::move(cell));
    }
  }
  return {{"axis1", {{"name", grid.axis1.name}, {"values", grid.axis1.values}}},
          {"axis2", {{"name", grid.axis2.name}, {"values", grid.axis2.values}}},
          {"cells", std::move(cells)}};
}

// ---- Ablation suite -------------------------------------------------------

struct AblationRow {
  std::string label;
  AblationFlags flags;
  std::vector<MetricsReport> per_seed;
  MetricsReport mean;
  MetricsReport stddev;  // sample standard deviation; zero for a single seed
};

namespace detail {

inline std::array<double, 6> report_fields(const MetricsReport& r) {
  return {r.average_precision, r.one_minus_hamming,  r.one_minus_ranking,
          r.auc,               r.one_minus_one_error, r.one_minus_coverage};
}

inline MetricsReport report_from_fields(const std::array<double, 6>& f) {
  MetricsReport r;
  r.average_precision = f[0];
  r.one_minus_hamming = f[1];
  r.one_minus_ranking = f[2];
  r.auc = f[3];
  r.one_minus_one_error = f[4];
  r.one_minus_coverage = f[5];
  return r;
}

}  // namespace detail

inline std::pair<MetricsReport, MetricsReport> report_mean_std(
    const std::vector<MetricsReport>& reports) {
  require(!reports.empty(), "report_mean_std: no reports");
  std::array<double, 6> mean{}, var{};
  for (const MetricsReport& r : reports) {
    const auto f = detail::report_fields(r);
    for (size_t k = 0; k < 6; ++k) mean[k] += f[k];
  }
  for (size_t k = 0; k < 6; ++k) mean[k] /= static_cast<double>(reports.size());
  if (reports.size() > 1) {
    for (const MetricsReport& r : reports) {
      const auto f = detail::report_fields(r);
      for (size_t k = 0; k < 6; ++k) var[k] += (f[k] - mean[k]) * (f[k] - mean[k]);
    }
    for (size_t k = 0; k < 6; ++k)
      var[k] = std::sqrt(var[k] / static_cast<double>(reports.size() - 1));
  }
  return {detail::report_from_fields(mean), detail::report_from_fields(var)};
}

// The standard 9 variants: bare backbone, each auxiliary loss alone, the two
// per-stage pairs, the full objective, and the joint one-stage baseline.
inline std::vector<AblationRow> ablation_variants() {
  auto flags = [](bool cp, bool sc, bool rec, bool gd, bool one) {
    AblationFlags f;
    f.use_cp = cp;
    f.use_sc = sc;
    f.use_rec = rec;
    f.use_gd = gd;
    f.one_stage = one;
    return f;
  };
  std::vector<AblationRow> rows;
  rows.push_back({"backbone", flags(false, false, false, false, false), {}, {}, {}});
  rows.push_back({"cp", flags(true, false, false, false, false), {}, {}, {}});
  rows.push_back({"sc", flags(false, true, false, false, false), {}, {}, {}});
  rows.push_back({"rec", flags(false, false, true, false, false), {}, {}, {}});
  rows.push_back({"gd", flags(false, false, false, true, false), {}, {}, {}});
  rows.push_back({"cp_sc", flags(true, true, false, false, false), {}, {}, {}});
  rows.push_back({"rec_gd", flags(false, false, true, true, false), {}, {}, {}});
  rows.push_back({"full", flags(true, true, true, true, false), {}, {}, {}});
  rows.push_back({"one_stage", flags(true, true, true, true, true), {}, {}, {}});
  return rows;
}

inline std::vector<AblationRow> ablation_suite(const MultiViewDataset& train,
                                               const MultiViewDataset& test,
                                               const TrainConfig& base,
                                               const std::vector<uint64_t>& seeds, int jobs = 1) {
  require(!seeds.empty(), "ablation_suite: need at least one seed");
  base.validate();
  std::vector<AblationRow> rows = ablation_variants();
  for (AblationRow& row : rows) row.per_seed.resize(seeds.size());
  const auto n_rows = static_cast<int64_t>(rows.size());
  const auto n_seeds = static_cast<int64_t>(seeds.size());
  parallel_for(n_rows * n_seeds, jobs, [&](int64_t task) {
    const auto ri = static_cast<size_t>(task / n_seeds);
    const auto si = static_cast<size_t>(task % n_seeds);
    TrainConfig cfg = base;
    cfg.ablation = rows[ri].flags;
    cfg.seed = seeds[si];
    const TrainResult r = train_full(train, cfg);
    rows[ri].per_seed[si] = evaluate(predict(r.params, test), test.labels);
  });
  for (AblationRow& row : rows) {
    const auto [mean, std] = report_mean_std(row.per_seed);
    row.mean = mean;
    row.stddev = std;
  }
  return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows,
                               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  io_require(out.good(), "cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "variant,use_cp,use_sc,use_rec,use_gd,one_stage,"
         "AP,one_minus_HL,one_minus_RL,AUC,one_minus_OE,one_minus_Cov,"
         "AP_std,one_minus_HL_std,one_minus_RL_std,AUC_std,one_minus_OE_std,one_minus_Cov_std\n";
  for (const AblationRow& row : rows) {
    const auto m = detail::report_fields(row.mean);
    const auto s = detail::report_fields(row.stddev);
    out << row.label << "," << row.flags.use_cp << "," << row.flags.use_sc << ","
        << row.flags.use_rec << "," << row.flags.use_gd << "," << row.flags.one_stage;
    for (double v : m) out << "," << v;
    for (double v : s) out << "," << v;
    out << "\n";
  }
  io_require(out.good(), "short write to '" + path.string() + "'");
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows,
                                       const std::vector<uint64_t>& seeds) {
  nlohmann::json out = nlohmann::json::array();
  for (const AblationRow& row : rows) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (size_t si = 0; si < row.per_seed.size(); ++si) {
      nlohmann::json r = row.per_seed[si].to_json();
      r["seed"] = seeds[si];
      per_seed.push_back(std::move(r));
    }
    out.push_back({{"variant", row.label},
                   {"use_cp", row.flags.use_cp},
                   {"use_sc", row.flags.use_sc},
                   {"use_rec", row.flags.use_rec},
                   {"use_gd", row.flags.use_gd},
                   {"one_stage", row.flags.one_stage},
                   {"per_seed", std::move(per_seed)},
                   {"mean", row.mean.to_json()},
                   {"stddev", row.stddev.to_json()}});
  }
  return out;
}

}  // namespace mvfd
