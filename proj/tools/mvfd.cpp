// mvfd: multi-view incomplete-data classification toolkit.
//
// Subcommands: convert, simulate, train, eval, grid, ablate, heatmap.
// Every run that writes files drops a run_manifest.json next to its outputs
// before real work starts (status "running") and rewrites it when finished.
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include "mvfd/mvfd.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mvfd::Mat;

namespace {

// ---- Small utilities ---------------------------------------------------------

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    mvfd::require(used == s.size(), what + ": trailing characters in '" + s + "'");
    return v;
  } catch (const mvfd::Error&) {
    throw;
  } catch (const std::exception&) {
    throw mvfd::ValidationError(what + ": '" + s + "' is not a number");
  }
}

uint64_t parse_u64(const std::string& s, const std::string& what) {
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw mvfd::ValidationError(what + ": '" + s + "' is not an unsigned integer");
  return v;
}

// MVFD_SEED overrides whatever seed the config layering produced.
std::optional<uint64_t> env_seed() {
  const char* raw = std::getenv("MVFD_SEED");
  if (!raw || !*raw) return std::nullopt;
  return parse_u64(raw, "MVFD_SEED");
}

// "name=v1,v2,..." -> GridAxis.
mvfd::GridAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  mvfd::require(eq != std::string::npos && eq > 0,
                "axis '" + text + "' must look like name=v1,v2,...");
  mvfd::GridAxis axis;
  axis.name = text.substr(0, eq);
  for (const std::string& tok : split_csv(text.substr(eq + 1)))
    axis.values.push_back(parse_double(tok, "axis " + axis.name));
  return axis;
}

// Writes the manifest as "failed" on unwind unless complete() ran first.
class ManifestGuard {
 public:
  mvfd::RunManifest manifest;

  void start(const fs::path& path) {
    path_ = path;
    manifest.started_at = mvfd::now_iso8601();
    manifest.status = "running";
    manifest.write(path_);
    armed_ = true;
  }

  void complete() {
    manifest.status = "complete";
    manifest.duration_seconds = timer_.seconds();
    manifest.write(path_);
    armed_ = false;
  }

  ~ManifestGuard() {
    if (!armed_) return;
    try {
      manifest.status = "failed";
      manifest.duration_seconds = timer_.seconds();
      manifest.write(path_);
    } catch (...) {
      // Best effort; the original error is already propagating.
    }
  }

 private:
  fs::path path_;
  mvfd::WallTimer timer_;
  bool armed_ = false;
};

fs::path sidecar_manifest(const fs::path& primary_output) {
  return primary_output.string() + ".manifest.json";
}

// ---- Config layering ----------------------------------------------------------

// Flags shared by train/grid/ablate. Each value lands in `patch` only when the
// user actually passed the flag, so precedence is defaults < file < flags.
struct ConfigFlags {
  std::string config_file;
  nlohmann::json patch = nlohmann::json::object();

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file (TrainConfig schema)");
    auto opt = [this, cmd](const std::string& flag, const std::string& key,
                           const std::string& help) {
      cmd->add_option_function<double>(
             flag, [this, key](double v) { patch[key] = v; }, help)
          ->group("Config overrides");
    };
    auto iopt = [this, cmd](const std::string& flag, const std::string& key,
                            const std::string& help) {
      cmd->add_option_function<int>(
             flag, [this, key](int v) { patch[key] = v; }, help)
          ->group("Config overrides");
    };
    opt("--alpha", "alpha", "cross-view prediction weight");
    opt("--beta", "beta", "semantic contrastive weight");
    opt("--gamma", "gamma", "reconstruction weight");
    opt("--lambda", "lambda", "graph disentangling weight");
    opt("--tau", "tau", "contrastive temperature");
    opt("--mask-ratio", "mask_ratio", "feature mask ratio in [0,1]");
    opt("--lr,--learning-rate", "learning_rate", "optimizer learning rate");
    iopt("--embed-dim", "embed_dim", "embedding width");
    iopt("--hidden-dim", "hidden_dim", "hidden layer width");
    iopt("--epochs-stage1", "epochs_stage1", "first-stage epochs");
    iopt("--epochs-stage2", "epochs_stage2", "second-stage epochs");
    iopt("--batch-size", "batch_size", "minibatch size");
    cmd->add_option_function<std::string>(
           "--hidden-activation",
           [this](const std::string& v) { patch["hidden_activation"] = v; },
           "hidden activation: relu|tanh|identity")
        ->group("Config overrides");
    cmd->add_option_function<uint64_t>(
           "--seed", [this](uint64_t v) { patch["seed"] = v; }, "RNG seed")
        ->group("Config overrides");
    cmd->add_flag_function(
           "--no-cp", [this](int64_t) { patch["use_cp"] = false; },
           "disable the cross-view prediction loss")
        ->group("Config overrides");
    cmd->add_flag_function(
           "--no-sc", [this](int64_t) { patch["use_sc"] = false; },
           "disable the semantic contrastive loss")
        ->group("Config overrides");
    cmd->add_flag_function(
           "--no-rec", [this](int64_t) { patch["use_rec"] = false; },
           "disable the reconstruction loss")
        ->group("Config overrides");
    cmd->add_flag_function(
           "--no-gd", [this](int64_t) { patch["use_gd"] = false; },
           "disable the graph disentangling loss")
        ->group("Config overrides");
  }

  mvfd::TrainConfig resolve() const {
    mvfd::TrainConfig cfg;  // layer 1: defaults
    if (!config_file.empty()) {  // layer 2: config file
      std::ifstream in(config_file);
      mvfd::io_require(in.good(), "cannot open config '" + config_file + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw mvfd::ValidationError("config '" + config_file + "': " + e.what());
      }
      cfg.apply_json(j);
    }
    cfg.apply_json(patch);  // layer 3: explicit flags
    if (const auto s = env_seed()) cfg.seed = *s;  // env override on top
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> collect_args(int argc, char** argv) {
  return std::vector<std::string>(argv, argv + argc);
}

// ---- convert -------------------------------------------------------------------

struct ConvertArgs {
  std::vector<std::string> view_csvs;
  std::string labels_csv;
  bool skip_header = false;
  std::string mat_file;
  std::string x_var = "X";
  std::string y_var = "Y";
  std::string names;
  std::string out;
};

// Feature-major inputs are flipped to sample-major using the label row count
// as ground truth for n.
mvfd::MultiViewDataset convert_from_mat(const ConvertArgs& a) {
  const auto vars = mvfd::read_mat_file(a.mat_file);
  const mvfd::MatVariable* xv = nullptr;
  const mvfd::MatVariable* yv = nullptr;
  std::string available;
  for (const auto& v : vars) {
    if (v.name == a.x_var) xv = &v;
    if (v.name == a.y_var) yv = &v;
    available += (available.empty() ? "" : ", ") + v.name;
  }
  mvfd::require(xv != nullptr, "variable '" + a.x_var + "' not found in '" + a.mat_file +
                                   "' (available: " + available + ")");
  mvfd::require(yv != nullptr, "variable '" + a.y_var + "' not found in '" + a.mat_file +
                                   "' (available: " + available + ")");
  mvfd::require(!yv->is_cell, "labels variable '" + a.y_var + "' must be a numeric matrix");

  std::vector<Mat> views;
  if (xv->is_cell) {
    views = xv->cells;
  } else {
    views.push_back(xv->matrix);
  }
  mvfd::require(!views.empty(), "'" + a.x_var + "' holds no views");
  Mat labels = yv->matrix;

  // Decide orientation: the row count shared by all views wins; if the views
  // only agree on columns, everything is feature-major and gets transposed.
  const auto n_rows = views[0].rows();
  bool rows_ok = true, cols_ok = true;
  for (const Mat& v : views) {
    rows_ok = rows_ok && v.rows() == n_rows;
    cols_ok = cols_ok && v.cols() == views[0].cols();
  }
  Eigen::Index n = n_rows;
  if (!rows_ok) {
    mvfd::require(cols_ok, "views disagree on both dimensions; cannot infer sample count");
    for (Mat& v : views) v = v.transpose().eval();
    n = views[0].rows();
    std::cerr << "note: views were feature-major; transposed to " << n << " samples\n";
  }
  if (labels.rows() != n && labels.cols() == n) {
    labels = labels.transpose().eval();
    std::cerr << "note: labels were category-major; transposed to " << labels.rows()
              << " samples\n";
  }
  std::vector<std::string> names;
  for (size_t v = 0; v < views.size(); ++v) names.push_back("view_" + std::to_string(v));
  return mvfd::assemble_complete_dataset(std::move(views), std::move(labels), std::move(names),
                                         "mat:" + fs::path(a.mat_file).filename().string());
}

int run_convert(const ConvertArgs& args_in, const std::vector<std::string>& argv) {
  ConvertArgs a = args_in;
  const bool csv_mode = !a.view_csvs.empty() || !a.labels_csv.empty();
  const bool mat_mode = !a.mat_file.empty();
  mvfd::require(csv_mode != mat_mode,
                "convert: pass either --views/--labels (CSV) or --mat, not both");

  mvfd::MultiViewDataset ds;
  if (csv_mode) {
    mvfd::require(!a.view_csvs.empty(), "convert: --views is required in CSV mode");
    mvfd::require(!a.labels_csv.empty(), "convert: --labels is required in CSV mode");
    std::vector<Mat> views;
    std::vector<std::string> names;
    for (const std::string& path : a.view_csvs) {
      views.push_back(mvfd::read_csv_matrix(path, a.skip_header));
      names.push_back(fs::path(path).stem().string());
    }
    Mat labels = mvfd::read_csv_matrix(a.labels_csv, a.skip_header);
    ds = mvfd::assemble_complete_dataset(std::move(views), std::move(labels), std::move(names),
                                         "csv:" + fs::path(a.labels_csv).filename().string());
  } else {
    ds = convert_from_mat(a);
  }
  if (!a.names.empty()) {
    auto names = split_csv(a.names);
    mvfd::require(names.size() == ds.views.size(),
                  "convert: --names lists " + std::to_string(names.size()) + " names for " +
                      std::to_string(ds.views.size()) + " views");
    ds.meta.view_names = std::move(names);
    ds.validate();
  }

  ManifestGuard guard;
  guard.manifest.subcommand = "convert";
  guard.manifest.command_line = argv;
  guard.manifest.config = {{"out", a.out}};
  guard.manifest.dataset_fingerprints = {ds.fingerprint()};
  guard.manifest.outputs = {a.out};
  guard.start(fs::path(a.out) / "run_manifest.json");
  mvfd::save_dataset(ds, a.out);
  guard.complete();
  std::cerr << "wrote " << ds.n() << " samples, " << ds.num_views() << " views, "
            << ds.num_labels() << " labels to " << a.out << "\n";
  return 0;
}

// ---- simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string data;
  std::string out;
  mvfd::CorruptionSpec spec;
};

int run_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  auto spec = a.spec;
  if (const auto s = env_seed()) spec.seed = *s;
  spec.validate();
  const auto ds = mvfd::load_dataset(a.data);

  ManifestGuard guard;
  guard.manifest.subcommand = "simulate";
  guard.manifest.command_line = argv;
  guard.manifest.config = {{"view_missing_rate", spec.view_missing_rate},
                           {"label_missing_rate", spec.label_missing_rate},
                           {"train_fraction", spec.train_fraction},
                           {"seed", spec.seed}};
  guard.manifest.dataset_fingerprints = {ds.fingerprint()};
  guard.manifest.seeds = {spec.seed};
  guard.manifest.outputs = {(fs::path(a.out) / "train").string(),
                            (fs::path(a.out) / "test").string()};
  guard.start(fs::path(a.out) / "run_manifest.json");

  const auto split = mvfd::simulate_incompleteness(ds, spec);
  mvfd::save_dataset(split.train, fs::path(a.out) / "train");
  mvfd::save_dataset(split.test, fs::path(a.out) / "test");
  guard.complete();
  std::cerr << "train: " << split.train.n() << " samples, test: " << split.test.n()
            << " samples -> " << a.out << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string stage = "both";  // both|stage1|stage2|one_stage
  bool stage_explicit = false;
  std::string init_from;
  int checkpoint_every = 0;
  bool print_config = false;
  ConfigFlags config;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  mvfd::TrainConfig cfg = a.config.resolve();
  std::string stage = a.stage;
  if (a.stage_explicit) {
    cfg.ablation.one_stage = (stage == "one_stage");
  } else if (cfg.ablation.one_stage) {
    stage = "one_stage";
  }
  if (a.print_config) {
    std::cout << cfg.to_json().dump(2) << "\n";
    return 0;
  }
  mvfd::require(!a.data.empty(), "train: --data is required");
  mvfd::require(!a.out.empty(), "train: --out is required");
  mvfd::require(stage != "stage2" || !a.init_from.empty(),
                "train: --stage stage2 needs --init-from <stage1 checkpoint>");

  const auto ds = mvfd::load_dataset(a.data);
  const fs::path out_dir(a.out);

  ManifestGuard guard;
  guard.manifest.subcommand = "train";
  guard.manifest.command_line = argv;
  guard.manifest.config = cfg.to_json();
  guard.manifest.config["stage"] = stage;
  guard.manifest.dataset_fingerprints = {ds.fingerprint()};
  guard.manifest.seeds = {cfg.seed};
  guard.manifest.outputs = {(out_dir / "log.jsonl").string()};
  auto ckpt_path = [&out_dir](const std::string& s) {
    return out_dir / ("checkpoint_" + s + ".ckpt");
  };
  if (stage == "both") {
    guard.manifest.outputs.push_back(ckpt_path("stage1").string());
    guard.manifest.outputs.push_back(ckpt_path("stage2").string());
  } else {
    guard.manifest.outputs.push_back(ckpt_path(stage == "one_stage" ? "one_stage" : stage).string());
  }
  guard.start(out_dir / "run_manifest.json");

  std::ofstream log(out_dir / "log.jsonl", std::ios::trunc);
  mvfd::io_require(log.good(), "cannot open '" + (out_dir / "log.jsonl").string() + "'");

  const int total_epochs =
      stage == "stage1"
          ? cfg.epochs_stage1
          : stage == "stage2"
                ? cfg.epochs_stage2
                : stage == "one_stage" ? std::max(cfg.epochs_stage1, cfg.epochs_stage2)
                                       : cfg.epochs_stage1 + cfg.epochs_stage2;
  int epochs_done = 0;
  double epoch_total = 0.0;
  int epoch_batches = 0;
  mvfd::TrainHooks hooks;
  hooks.on_batch = [&](const mvfd::BatchRecord& r) {
    log << r.to_json().dump() << "\n";
    epoch_total += r.total;
    ++epoch_batches;
  };
  hooks.on_epoch_end = [&](const mvfd::EpochStats& es, const mvfd::ModelParams& params) {
    log << es.to_json().dump() << "\n";
    ++epochs_done;
    std::cerr << "[" << es.stage << "] epoch " << es.epoch + 1 << " (" << epochs_done << "/"
              << total_epochs << ") mean_total="
              << (epoch_batches > 0 ? epoch_total / epoch_batches : 0.0) << "\n";
    epoch_total = 0.0;
    epoch_batches = 0;
    if (a.checkpoint_every > 0 && (es.epoch + 1) % a.checkpoint_every == 0) {
      mvfd::CheckpointInfo info{es.stage, es.epoch + 1, cfg.seed};
      mvfd::save_checkpoint(params, info,
                            out_dir / ("checkpoint_" + es.stage + "_epoch_" +
                                       std::to_string(es.epoch + 1) + ".ckpt"));
    }
  };

  if (stage == "both") {
    auto s1 = mvfd::train_stage1(ds, cfg, hooks);
    mvfd::save_checkpoint(s1.params, {"stage1", cfg.epochs_stage1, cfg.seed}, ckpt_path("stage1"));
    auto s2 = mvfd::train_stage2(ds, std::move(s1.params), cfg, hooks);
    mvfd::save_checkpoint(s2.params, {"stage2", cfg.epochs_stage2, cfg.seed}, ckpt_path("stage2"));
  } else if (stage == "stage1") {
    auto r = mvfd::train_stage1(ds, cfg, hooks);
    mvfd::save_checkpoint(r.params, {"stage1", cfg.epochs_stage1, cfg.seed}, ckpt_path("stage1"));
  } else if (stage == "stage2") {
    auto init = mvfd::load_checkpoint(a.init_from);
    auto r = mvfd::train_stage2(ds, std::move(init.params), cfg, hooks);
    mvfd::save_checkpoint(r.params, {"stage2", cfg.epochs_stage2, cfg.seed}, ckpt_path("stage2"));
  } else if (stage == "one_stage") {
    auto r = mvfd::train_one_stage(ds, cfg, hooks);
    mvfd::save_checkpoint(
        r.params, {"one_stage", std::max(cfg.epochs_stage1, cfg.epochs_stage2), cfg.seed},
        ckpt_path("one_stage"));
  } else {
    throw mvfd::ValidationError("train: unknown --stage '" + stage +
                                "' (expected both|stage1|stage2|one_stage)");
  }
  mvfd::io_require(log.good(), "short write to the training log");
  log.close();
  guard.complete();
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string out;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  mvfd::require(!a.checkpoints.empty(), "eval: at least one --checkpoint is required");
  const auto ds = mvfd::load_dataset(a.data);

  ManifestGuard guard;
  guard.manifest.subcommand = "eval";
  guard.manifest.command_line = argv;
  guard.manifest.config = {{"checkpoints", a.checkpoints}};
  guard.manifest.dataset_fingerprints = {ds.fingerprint()};
  guard.manifest.outputs = {a.out};
  guard.start(sidecar_manifest(a.out));

  std::vector<mvfd::MetricsReport> reports;
  nlohmann::json per_checkpoint = nlohmann::json::array();
  for (const std::string& path : a.checkpoints) {
    const auto loaded = mvfd::load_checkpoint(path);
    const auto report = mvfd::evaluate(mvfd::predict(loaded.params, ds), ds.labels);
    per_checkpoint.push_back({{"checkpoint", path},
                              {"stage", loaded.info.stage},
                              {"epoch", loaded.info.epoch},
                              {"seed", loaded.info.seed},
                              {"metrics", report.to_json()}});
    reports.push_back(report);
  }
  const auto [mean, stddev] = mvfd::report_mean_std(reports);

  // Top level carries the mean metrics directly so a single-checkpoint eval
  // reads as a plain metrics report.
  nlohmann::json out = mean.to_json();
  out["format"] = "mvfd-eval";
  out["n_checkpoints"] = a.checkpoints.size();
  out["per_checkpoint"] = std::move(per_checkpoint);
  out["mean"] = mean.to_json();
  out["stddev"] = stddev.to_json();

  std::ofstream f(a.out, std::ios::trunc);
  mvfd::io_require(f.good(), "cannot open '" + a.out + "' for writing");
  f << out.dump(2) << "\n";
  mvfd::io_require(f.good(), "short write to '" + a.out + "'");
  guard.complete();
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---- grid ----------------------------------------------------------------------

struct GridArgs {
  std::string train_dir, test_dir;
  std::string axis1, axis2;
  std::string out_csv, out_json;
  int jobs = 1;
  ConfigFlags config;
};

int run_grid(const GridArgs& a, const std::vector<std::string>& argv) {
  const mvfd::TrainConfig cfg = a.config.resolve();
  const auto axis1 = parse_axis(a.axis1);
  const auto axis2 = parse_axis(a.axis2);
  const auto train = mvfd::load_dataset(a.train_dir);
  const auto test = mvfd::load_dataset(a.test_dir);

  ManifestGuard guard;
  guard.manifest.subcommand = "grid";
  guard.manifest.command_line = argv;
  guard.manifest.config = cfg.to_json();
  guard.manifest.config["axis1"] = a.axis1;
  guard.manifest.config["axis2"] = a.axis2;
  guard.manifest.dataset_fingerprints = {train.fingerprint(),
                                         test.fingerprint()};
  guard.manifest.seeds = {cfg.seed};
  if (!a.out_csv.empty()) guard.manifest.outputs.push_back(a.out_csv);
  if (!a.out_json.empty()) guard.manifest.outputs.push_back(a.out_json);
  mvfd::require(!guard.manifest.outputs.empty(), "grid: pass --out-csv and/or --out-json");
  guard.start(sidecar_manifest(guard.manifest.outputs.front()));

  const auto grid = mvfd::grid_sweep(train, test, cfg, axis1, axis2, a.jobs);
  if (!a.out_csv.empty()) mvfd::write_grid_csv(grid, a.out_csv);
  if (!a.out_json.empty()) {
    std::ofstream f(a.out_json, std::ios::trunc);
    mvfd::io_require(f.good(), "cannot open '" + a.out_json + "' for writing");
    f << mvfd::grid_to_json(grid).dump(2) << "\n";
    mvfd::io_require(f.good(), "short write to '" + a.out_json + "'");
  }
  guard.complete();
  return 0;
}

// ---- ablate --------------------------------------------------------------------

struct AblateArgs {
  std::string train_dir, test_dir;
  std::string seeds = "0,1,2,3,4";
  std::string out_csv, out_json;
  int jobs = 1;
  ConfigFlags config;
};

int run_ablate(const AblateArgs& a, const std::vector<std::string>& argv) {
  const mvfd::TrainConfig cfg = a.config.resolve();
  std::vector<uint64_t> seeds;
  for (const std::string& tok : split_csv(a.seeds)) seeds.push_back(parse_u64(tok, "--seeds"));
  const auto train = mvfd::load_dataset(a.train_dir);
  const auto test = mvfd::load_dataset(a.test_dir);

  ManifestGuard guard;
  guard.manifest.subcommand = "ablate";
  guard.manifest.command_line = argv;
  guard.manifest.config = cfg.to_json();
  guard.manifest.dataset_fingerprints = {train.fingerprint(),
                                         test.fingerprint()};
  guard.manifest.seeds = seeds;
  if (!a.out_csv.empty()) guard.manifest.outputs.push_back(a.out_csv);
  if (!a.out_json.empty()) guard.manifest.outputs.push_back(a.out_json);
  mvfd::require(!guard.manifest.outputs.empty(), "ablate: pass --out-csv and/or --out-json");
  guard.start(sidecar_manifest(guard.manifest.outputs.front()));

  const auto rows = mvfd::ablation_suite(train, test, cfg, seeds, a.jobs);
  if (!a.out_csv.empty()) mvfd::write_ablation_csv(rows, a.out_csv);
  if (!a.out_json.empty()) {
    std::ofstream f(a.out_json, std::ios::trunc);
    mvfd::io_require(f.good(), "cannot open '" + a.out_json + "' for writing");
    f << mvfd::ablation_to_json(rows, seeds).dump(2) << "\n";
    mvfd::io_require(f.good(), "short write to '" + a.out_json + "'");
  }
  guard.complete();
  for (const auto& row : rows)
    std::cerr << row.label << ": AP=" << row.mean.average_precision
              << " AUC=" << row.mean.auc << "\n";
  return 0;
}

// ---- heatmap -------------------------------------------------------------------

struct HeatmapArgs {
  std::string checkpoint;
  std::string run_dir;
  int epoch = -1;
  std::string stage = "stage2";
  std::string data;
  int64_t sample = 0;
  std::string out_csv, out_pgm;
  int scale = 32;
};

int run_heatmap(const HeatmapArgs& a, const std::vector<std::string>& argv) {
  fs::path ckpt;
  if (!a.checkpoint.empty()) {
    mvfd::require(a.run_dir.empty() && a.epoch < 0,
                  "heatmap: pass either --checkpoint or --run/--epoch, not both");
    ckpt = a.checkpoint;
  } else {
    mvfd::require(!a.run_dir.empty() && a.epoch >= 1,
                  "heatmap: pass --checkpoint, or --run <train out dir> with --epoch >= 1");
    ckpt = fs::path(a.run_dir) /
           ("checkpoint_" + a.stage + "_epoch_" + std::to_string(a.epoch) + ".ckpt");
  }
  mvfd::require(!a.out_csv.empty() || !a.out_pgm.empty(),
                "heatmap: pass --out-csv and/or --out-pgm");
  const auto loaded = mvfd::load_checkpoint(ckpt);
  const auto ds = mvfd::load_dataset(a.data);

  ManifestGuard guard;
  guard.manifest.subcommand = "heatmap";
  guard.manifest.command_line = argv;
  guard.manifest.config = {{"checkpoint", ckpt.string()},
                           {"sample", a.sample},
                           {"scale", a.scale}};
  guard.manifest.dataset_fingerprints = {ds.fingerprint()};
  if (!a.out_csv.empty()) guard.manifest.outputs.push_back(a.out_csv);
  if (!a.out_pgm.empty()) guard.manifest.outputs.push_back(a.out_pgm);
  guard.start(sidecar_manifest(guard.manifest.outputs.front()));

  const auto hm = mvfd::compute_heatmap(loaded.params, ds, a.sample);
  if (!a.out_csv.empty()) mvfd::write_heatmap_csv(hm, a.out_csv);
  if (!a.out_pgm.empty()) mvfd::write_heatmap_pgm(hm, a.out_pgm, a.scale);
  guard.complete();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view incomplete-data classification toolkit"};
  app.set_version_flag("--version", std::string(mvfd::kVersion));
  app.require_subcommand(1);
  const auto args = collect_args(argc, argv);

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand("convert", "build a dataset directory from CSVs or a MAT file");
  convert->add_option("--views", convert_args.view_csvs, "per-view CSV files (repeatable)");
  convert->add_option("--labels", convert_args.labels_csv, "labels CSV file");
  convert->add_flag("--skip-header", convert_args.skip_header, "skip the first CSV line");
  convert->add_option("--mat", convert_args.mat_file, "MATLAB Level-5 .mat container");
  convert->add_option("--x-var", convert_args.x_var, "views variable name in the MAT file");
  convert->add_option("--y-var", convert_args.y_var, "labels variable name in the MAT file");
  convert->add_option("--names", convert_args.names, "comma-separated view names");
  convert->add_option("--out", convert_args.out, "output dataset directory")->required();

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "corrupt a complete dataset and split train/test");
  simulate->add_option("--data", sim_args.data, "complete dataset directory")->required();
  simulate->add_option("--out", sim_args.out, "output directory (gets train/ and test/)")
      ->required();
  simulate->add_option("--view-missing-rate", sim_args.spec.view_missing_rate,
                       "fraction of samples disabled per view [0,1)");
  simulate->add_option("--label-missing-rate", sim_args.spec.label_missing_rate,
                       "fraction of entries hidden per label [0,1)");
  simulate->add_option("--train-fraction", sim_args.spec.train_fraction,
                       "fraction of samples for training (0,1)");
  simulate->add_option("--seed", sim_args.spec.seed, "corruption/split seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train the two-stage (or joint) model");
  train->add_option("--data", train_args.data, "training dataset directory");
  train->add_option("--out", train_args.out, "output directory (checkpoints + log.jsonl)");
  auto* stage_opt = train->add_option("--stage", train_args.stage,
                                      "both|stage1|stage2|one_stage (default both)");
  train->add_option("--init-from", train_args.init_from, "stage-1 checkpoint for --stage stage2");
  train->add_option("--checkpoint-every", train_args.checkpoint_every,
                    "also save a checkpoint every N epochs (1-based numbering)");
  train->add_flag("--print-config", train_args.print_config,
                  "print the resolved config JSON and exit");
  train_args.config.attach(train);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a dataset");
  eval->add_option("--checkpoint", eval_args.checkpoints, "checkpoint file (repeatable)")
      ->required();
  eval->add_option("--data", eval_args.data, "evaluation dataset directory")->required();
  eval->add_option("--out", eval_args.out, "output JSON report")->required();

  GridArgs grid_args;
  auto* grid = app.add_subcommand("grid", "hyperparameter grid sweep (train+eval per cell)");
  grid->add_option("--train", grid_args.train_dir, "training dataset directory")->required();
  grid->add_option("--test", grid_args.test_dir, "test dataset directory")->required();
  grid->add_option("--axis1", grid_args.axis1, "first axis, e.g. alpha=0.1,0.5,1")->required();
  grid->add_option("--axis2", grid_args.axis2, "second axis, e.g. tau=0.5,1")->required();
  grid->add_option("--out-csv", grid_args.out_csv, "grid table CSV");
  grid->add_option("--out-json", grid_args.out_json, "grid table JSON");
  grid->add_option("--jobs", grid_args.jobs, "parallel training jobs");
  grid_args.config.attach(grid);

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "run the 9-variant ablation suite");
  ablate->add_option("--train", ablate_args.train_dir, "training dataset directory")->required();
  ablate->add_option("--test", ablate_args.test_dir, "test dataset directory")->required();
  ablate->add_option("--seeds", ablate_args.seeds, "comma-separated seeds (default 0,1,2,3,4)");
  ablate->add_option("--out-csv", ablate_args.out_csv, "ablation table CSV");
  ablate->add_option("--out-json", ablate_args.out_json, "ablation table JSON");
  ablate->add_option("--jobs", ablate_args.jobs, "parallel training jobs");
  ablate_args.config.attach(ablate);

  HeatmapArgs hm_args;
  auto* heatmap = app.add_subcommand("heatmap", "embedding cosine heat map for one sample");
  heatmap->add_option("--checkpoint", hm_args.checkpoint, "checkpoint file");
  heatmap->add_option("--run", hm_args.run_dir, "train output dir holding epoch checkpoints");
  heatmap->add_option("--epoch", hm_args.epoch, "epoch number (with --run; needs --checkpoint-every)");
  heatmap->add_option("--stage", hm_args.stage, "stage for --run lookup (default stage2)");
  heatmap->add_option("--data", hm_args.data, "dataset directory")->required();
  heatmap->add_option("--sample", hm_args.sample, "sample index")->required();
  heatmap->add_option("--out-csv", hm_args.out_csv, "heat map CSV");
  heatmap->add_option("--out-pgm", hm_args.out_pgm, "heat map PGM image");
  heatmap->add_option("--scale", hm_args.scale, "pixels per cell (default 32)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help exits 0; any parse problem is a usage error
  }

  try {
    train_args.stage_explicit = stage_opt->count() > 0;
    if (convert->parsed()) return run_convert(convert_args, args);
    if (simulate->parsed()) return run_simulate(sim_args, args);
    if (train->parsed()) return run_train(train_args, args);
    if (eval->parsed()) return run_eval(eval_args, args);
    if (grid->parsed()) return run_grid(grid_args, args);
    if (ablate->parsed()) return run_ablate(ablate_args, args);
    if (heatmap->parsed()) return run_heatmap(hm_args, args);
    std::cerr << app.help() << "\n";
    return 1;
  } catch (const mvfd::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mvfd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}
