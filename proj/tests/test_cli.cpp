// End-to-end tests for the mvfd binary: every subcommand is exercised through
// std::system against real files. The binary path arrives via $MVFD_BIN.

#include "mvfd/mvfd.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <zlib.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mvfd::Mat;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("mvfd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& s) const { return path / s; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the binary through the shell; `env_prefix` lets tests set MVFD_SEED.
CmdResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  const char* bin = std::getenv("MVFD_BIN");
  REQUIRE(bin != nullptr);
  static int counter = 0;
  const fs::path base = fs::temp_directory_path() /
                        ("mvfd_cli_io_" + std::to_string(::getpid()) + "_" +
                         std::to_string(counter++));
  const fs::path out_file = base.string() + ".out";
  const fs::path err_file = base.string() + ".err";
  const std::string cmd = env_prefix + (env_prefix.empty() ? "" : " ") + "'" + bin + "' " + args +
                          " >'" + out_file.string() + "' 2>'" + err_file.string() + "'";
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

mvfd::MultiViewDataset tiny_dataset(int64_t n, std::vector<int> dims, int c, uint64_t seed) {
  mvfd::SyntheticSpec spec;
  spec.n = n;
  spec.latent_dim = 3;
  spec.num_labels = c;
  spec.view_dims = std::move(dims);
  spec.noise = 0.05;
  // On a 3-dim latent the default correlation makes both label functionals
  // nearly collinear, leaving tiny splits without mixed-label rows.
  spec.latent_corr = 0.0;
  spec.seed = seed;
  return mvfd::make_synthetic(spec);
}

// Flags every training-heavy CLI test passes to stay fast.
const std::string kTinyTrain =
    " --epochs-stage1 2 --epochs-stage2 2 --batch-size 64 --embed-dim 3 --hidden-dim 4"
    " --hidden-activation tanh --seed 7";

// ---- MATLAB Level-5 byte builders -------------------------------------------

void put_u16(std::string& b, uint16_t v) { b.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& b, uint32_t v) { b.append(reinterpret_cast<const char*>(&v), 4); }
void put_i32(std::string& b, int32_t v) { b.append(reinterpret_cast<const char*>(&v), 4); }
void put_f64(std::string& b, double v) { b.append(reinterpret_cast<const char*>(&v), 8); }

std::string mat_element(uint32_t type, const std::string& payload) {
  std::string b;
  put_u32(b, type);
  put_u32(b, static_cast<uint32_t>(payload.size()));
  b += payload;
  while (b.size() % 8 != 0) b.push_back('\0');
  return b;
}

std::string mat_matrix_header(uint32_t array_class, int32_t rows, int32_t cols,
                              const std::string& name) {
  std::string flags;
  put_u32(flags, array_class);  // low byte = class, no complex/logical bits
  put_u32(flags, 0);            // nzmax
  std::string dims;
  put_i32(dims, rows);
  put_i32(dims, cols);
  return mat_element(6 /*miUINT32*/, flags) + mat_element(5 /*miINT32*/, dims) +
         mat_element(1 /*miINT8*/, name);
}

// Column-major doubles, class mxDOUBLE.
std::string mat_double_matrix(const std::string& name, const Mat& m) {
  std::string data;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_f64(data, m(i, j));
  const std::string body =
      mat_matrix_header(6 /*mxDOUBLE*/, static_cast<int32_t>(m.rows()),
                        static_cast<int32_t>(m.cols()), name) +
      mat_element(9 /*miDOUBLE*/, data);
  return mat_element(14 /*miMATRIX*/, body);
}

// Column-major uint8 payload, class mxUINT8 (exercises integer widening).
std::string mat_uint8_matrix(const std::string& name, const Mat& m) {
  std::string data;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      data.push_back(static_cast<char>(static_cast<unsigned char>(m(i, j))));
  const std::string body =
      mat_matrix_header(9 /*mxUINT8*/, static_cast<int32_t>(m.rows()),
                        static_cast<int32_t>(m.cols()), name) +
      mat_element(2 /*miUINT8*/, data);
  return mat_element(14 /*miMATRIX*/, body);
}

std::string mat_cell_of_matrices(const std::string& name, const std::vector<Mat>& mats) {
  std::string body =
      mat_matrix_header(1 /*mxCELL*/, 1, static_cast<int32_t>(mats.size()), name);
  for (size_t k = 0; k < mats.size(); ++k)
    body += mat_double_matrix("", mats[k]);  // cell entries carry empty names
  return mat_element(14 /*miMATRIX*/, body);
}

std::string mat_compressed(const std::string& element) {
  uLongf bound = compressBound(static_cast<uLong>(element.size()));
  std::string packed(bound, '\0');
  REQUIRE(compress2(reinterpret_cast<Bytef*>(packed.data()), &bound,
                    reinterpret_cast<const Bytef*>(element.data()),
                    static_cast<uLong>(element.size()), 6) == Z_OK);
  packed.resize(bound);
  return mat_element(15 /*miCOMPRESSED*/, packed);
}

std::string mat_file_bytes(const std::string& elements) {
  std::string header = "MATLAB 5.0 MAT-file, written by hand for testing";
  header.resize(116, ' ');
  header.append(8, '\0');        // subsystem offset
  put_u16(header, 0x0100);       // version
  header += "IM";                // little-endian marker
  REQUIRE(header.size() == 128);
  return header + elements;
}

bool matrices_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("cli: help, version, and usage errors", "[cli]") {
  const auto help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("convert") != std::string::npos);
  CHECK(help.out.find("heatmap") != std::string::npos);

  const auto version = run_cli("--version");
  CHECK(version.code == 0);
  CHECK(version.out.find("0.1.0") != std::string::npos);

  CHECK(run_cli("").code == 1);                           // missing subcommand
  CHECK(run_cli("frobnicate").code == 1);                 // unknown subcommand
  const auto unknown_flag = run_cli("train --frobnicate 3");
  CHECK(unknown_flag.code == 1);
  CHECK(unknown_flag.err.find("--frobnicate") != std::string::npos);

  const auto missing_required = run_cli("eval --data x --out y");
  CHECK(missing_required.code == 1);
  CHECK(missing_required.err.find("--checkpoint") != std::string::npos);
}

TEST_CASE("cli: convert from CSV files", "[cli]") {
  TempDir tmp;
  write_text(tmp / "motion.csv", "1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
  write_text(tmp / "audio.csv", "0.5,1.5\n2.5,3.5\n4.5,5.5\n6.5,7.5\n");
  write_text(tmp / "tags.csv", "1,0\n0,1\n-1,1\n1,-1\n");  // -1 means negative

  const fs::path out = tmp / "ds";
  const auto r = run_cli("convert --views " + q(tmp / "motion.csv") + " --views " +
                         q(tmp / "audio.csv") + " --labels " + q(tmp / "tags.csv") + " --out " +
                         q(out));
  INFO(r.err);
  REQUIRE(r.code == 0);

  const auto ds = mvfd::load_dataset(out);
  REQUIRE(ds.n() == 4);
  REQUIRE(ds.num_views() == 2);
  REQUIRE(ds.num_labels() == 2);
  CHECK(ds.views[0](2, 1) == 8.0);
  CHECK(ds.views[1](3, 0) == 6.5);
  CHECK(ds.labels(2, 0) == 0.0);  // -1 normalized to 0
  CHECK(ds.labels(2, 1) == 1.0);
  CHECK(ds.view_indicator.minCoeff() == 1.0);
  CHECK(ds.label_indicator.minCoeff() == 1.0);
  CHECK(ds.meta.view_names == std::vector<std::string>{"motion", "audio"});

  const json manifest = read_json(out / "run_manifest.json");
  CHECK(manifest.at("subcommand") == "convert");
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("tool_version") == "0.1.0");

  SECTION("--skip-header and --names") {
    write_text(tmp / "h1.csv", "a,b\n1,2\n3,4\n");
    write_text(tmp / "hy.csv", "y\n1\n0\n");
    const fs::path out2 = tmp / "ds2";
    const auto r2 = run_cli("convert --views " + q(tmp / "h1.csv") + " --labels " +
                            q(tmp / "hy.csv") + " --skip-header --names gait --out " + q(out2));
    INFO(r2.err);
    REQUIRE(r2.code == 0);
    const auto ds2 = mvfd::load_dataset(out2);
    CHECK(ds2.n() == 2);
    CHECK(ds2.meta.view_names == std::vector<std::string>{"gait"});
  }
  SECTION("validation failures exit 1") {
    write_text(tmp / "bad.csv", "1,2\n3,oops\n");
    CHECK(run_cli("convert --views " + q(tmp / "bad.csv") + " --labels " + q(tmp / "tags.csv") +
                  " --out " + q(tmp / "never"))
              .code == 1);
    write_text(tmp / "ragged.csv", "1,2\n3\n");
    CHECK(run_cli("convert --views " + q(tmp / "ragged.csv") + " --labels " +
                  q(tmp / "tags.csv") + " --out " + q(tmp / "never"))
              .code == 1);
    // label rows disagree with view rows
    write_text(tmp / "short.csv", "1,0\n0,1\n");
    const auto mismatch = run_cli("convert --views " + q(tmp / "motion.csv") + " --labels " +
                                  q(tmp / "short.csv") + " --out " + q(tmp / "never"));
    CHECK(mismatch.code == 1);
    CHECK(mismatch.err.find("transpose") != std::string::npos);
    // --names count mismatch
    CHECK(run_cli("convert --views " + q(tmp / "motion.csv") + " --labels " +
                  q(tmp / "tags.csv") + " --names a,b,c --out " + q(tmp / "never"))
              .code == 1);
    // missing file is an I/O error
    CHECK(run_cli("convert --views " + q(tmp / "absent.csv") + " --labels " +
                  q(tmp / "tags.csv") + " --out " + q(tmp / "never"))
              .code == 2);
  }
}

TEST_CASE("cli: convert from MAT containers", "[cli]") {
  TempDir tmp;
  Mat v0(5, 3), v1(5, 2), y(5, 2);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) v0(i, j) = 10.0 * static_cast<double>(i) + static_cast<double>(j);
    for (Eigen::Index j = 0; j < 2; ++j) v1(i, j) = 0.25 * static_cast<double>(i) - static_cast<double>(j);
    y(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
    y(i, 1) = 1.0 - y(i, 0);
  }

  SECTION("cell array of views, sample-major") {
    write_text(tmp / "d.mat",
               mat_file_bytes(mat_cell_of_matrices("X", {v0, v1}) + mat_double_matrix("Y", y)));
    const fs::path out = tmp / "ds";
    const auto r = run_cli("convert --mat " + q(tmp / "d.mat") + " --out " + q(out));
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto ds = mvfd::load_dataset(out);
    REQUIRE(ds.num_views() == 2);
    CHECK(matrices_equal(ds.views[0], v0));
    CHECK(matrices_equal(ds.views[1], v1));
    CHECK(matrices_equal(ds.labels, y));
    CHECK(ds.meta.view_names == std::vector<std::string>{"view_0", "view_1"});
  }
  SECTION("feature-major views and category-major labels are transposed") {
    const Mat v0t = v0.transpose(), v1t = v1.transpose(), yt = y.transpose();
    write_text(tmp / "t.mat",
               mat_file_bytes(mat_cell_of_matrices("X", {v0t, v1t}) + mat_double_matrix("Y", yt)));
    const fs::path out = tmp / "ds";
    const auto r = run_cli("convert --mat " + q(tmp / "t.mat") + " --out " + q(out));
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.err.find("transposed") != std::string::npos);
    const auto ds = mvfd::load_dataset(out);
    CHECK(matrices_equal(ds.views[0], v0));
    CHECK(matrices_equal(ds.views[1], v1));
    CHECK(matrices_equal(ds.labels, y));
  }
  SECTION("compressed elements and integer label classes") {
    write_text(tmp / "c.mat",
               mat_file_bytes(mat_compressed(mat_cell_of_matrices("X", {v0, v1})) +
                              mat_compressed(mat_uint8_matrix("Y", y))));
    const fs::path out = tmp / "ds";
    const auto r = run_cli("convert --mat " + q(tmp / "c.mat") + " --out " + q(out));
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto ds = mvfd::load_dataset(out);
    CHECK(matrices_equal(ds.views[0], v0));
    CHECK(matrices_equal(ds.labels, y));
  }
  SECTION("plain numeric X becomes a single view") {
    write_text(tmp / "s.mat",
               mat_file_bytes(mat_double_matrix("X", v0) + mat_double_matrix("Y", y)));
    const fs::path out = tmp / "ds";
    REQUIRE(run_cli("convert --mat " + q(tmp / "s.mat") + " --out " + q(out)).code == 0);
    const auto ds = mvfd::load_dataset(out);
    REQUIRE(ds.num_views() == 1);
    CHECK(matrices_equal(ds.views[0], v0));
  }
  SECTION("--x-var/--y-var select variables by name") {
    write_text(tmp / "n.mat",
               mat_file_bytes(mat_cell_of_matrices("features", {v0}) +
                              mat_double_matrix("targets", y)));
    const fs::path out = tmp / "ds";
    REQUIRE(run_cli("convert --mat " + q(tmp / "n.mat") +
                    " --x-var features --y-var targets --out " + q(out))
                .code == 0);
    const auto missing = run_cli("convert --mat " + q(tmp / "n.mat") + " --out " + q(tmp / "x"));
    CHECK(missing.code == 1);
    CHECK(missing.err.find("features") != std::string::npos);  // lists what is available
  }
  SECTION("v7.3 files are rejected with advice") {
    std::string hdf5;
    hdf5.push_back(static_cast<char>(0x89));
    hdf5 += "HDF\r\n";
    hdf5.push_back(0x1a);
    hdf5 += "\n";
    hdf5.resize(256, '\0');
    write_text(tmp / "v73.mat", hdf5);
    const auto r = run_cli("convert --mat " + q(tmp / "v73.mat") + " --out " + q(tmp / "x"));
    CHECK(r.code == 1);
    CHECK(r.err.find("save -v7") != std::string::npos);
  }
  SECTION("garbage container is rejected") {
    write_text(tmp / "junk.mat", std::string(300, 'z'));
    CHECK(run_cli("convert --mat " + q(tmp / "junk.mat") + " --out " + q(tmp / "x")).code == 1);
  }
  SECTION("labels in -1/+1 coding are normalized") {
    Mat ypm = y;
    for (Eigen::Index i = 0; i < ypm.size(); ++i) ypm(i) = ypm(i) == 0.0 ? -1.0 : 1.0;
    write_text(tmp / "pm.mat",
               mat_file_bytes(mat_double_matrix("X", v0) + mat_double_matrix("Y", ypm)));
    const fs::path out = tmp / "ds";
    REQUIRE(run_cli("convert --mat " + q(tmp / "pm.mat") + " --out " + q(out)).code == 0);
    CHECK(matrices_equal(mvfd::load_dataset(out).labels, y));
  }
}

TEST_CASE("cli: simulate corrupts and splits deterministically", "[cli]") {
  TempDir tmp;
  mvfd::save_dataset(tiny_dataset(30, {3, 2}, 2, 11), tmp / "full");

  const auto r = run_cli("simulate --data " + q(tmp / "full") + " --out " + q(tmp / "a") +
                         " --view-missing-rate 0.4 --label-missing-rate 0.3"
                         " --train-fraction 0.7 --seed 5");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto train = mvfd::load_dataset(tmp / "a" / "train");
  const auto test = mvfd::load_dataset(tmp / "a" / "test");
  CHECK(train.n() == 21);
  CHECK(test.n() == 9);
  CHECK(train.view_indicator.rowwise().sum().minCoeff() >= 1.0);  // nobody loses every view
  CHECK(train.view_indicator.sum() < 2.0 * 21.0);                 // something was removed
  CHECK(test.label_indicator.minCoeff() == 1.0);                  // test labels stay observed

  const json manifest = read_json(tmp / "a" / "run_manifest.json");
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("seeds") == json::array({5}));

  SECTION("same seed reproduces, MVFD_SEED overrides") {
    REQUIRE(run_cli("simulate --data " + q(tmp / "full") + " --out " + q(tmp / "b") +
                    " --view-missing-rate 0.4 --label-missing-rate 0.3"
                    " --train-fraction 0.7 --seed 5")
                .code == 0);
    CHECK(mvfd::load_dataset(tmp / "b" / "train").fingerprint() == train.fingerprint());

    REQUIRE(run_cli("simulate --data " + q(tmp / "full") + " --out " + q(tmp / "c") +
                    " --view-missing-rate 0.4 --label-missing-rate 0.3"
                    " --train-fraction 0.7 --seed 5",
                    "MVFD_SEED=99")
                .code == 0);
    CHECK(mvfd::load_dataset(tmp / "c" / "train").fingerprint() != train.fingerprint());
    CHECK(read_json(tmp / "c" / "run_manifest.json").at("seeds") == json::array({99}));
  }
  SECTION("invalid rates exit 1") {
    CHECK(run_cli("simulate --data " + q(tmp / "full") + " --out " + q(tmp / "x") +
                  " --view-missing-rate 1.0")
              .code == 1);
  }
}

TEST_CASE("cli: train writes checkpoints, logs, and manifests", "[cli]") {
  TempDir tmp;
  mvfd::save_dataset(tiny_dataset(48, {3, 2}, 2, 21), tmp / "ds");

  const fs::path run = tmp / "run";
  const auto r = run_cli("train --data " + q(tmp / "ds") + " --out " + q(run) + kTinyTrain);
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(run / "checkpoint_stage1.ckpt"));
  CHECK(fs::exists(run / "checkpoint_stage2.ckpt"));
  CHECK(r.err.find("[stage1] epoch 1") != std::string::npos);  // progress goes to stderr

  // log.jsonl: every line parses; batch lines precede their epoch line.
  std::ifstream log(run / "log.jsonl");
  REQUIRE(log.good());
  std::string line;
  int batch_lines = 0, epoch_lines = 0;
  while (std::getline(log, line)) {
    const json rec = json::parse(line);
    if (rec.at("type") == "batch") ++batch_lines;
    if (rec.at("type") == "epoch") ++epoch_lines;
    CHECK((rec.at("stage") == "stage1" || rec.at("stage") == "stage2"));
  }
  CHECK(epoch_lines == 4);   // 2 stage-1 + 2 stage-2 epochs
  CHECK(batch_lines == 4);   // 48 samples, batch 64 -> one batch per epoch

  const json manifest = read_json(run / "run_manifest.json");
  CHECK(manifest.at("subcommand") == "train");
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("config").at("stage") == "both");
  CHECK(manifest.at("duration_seconds").get<double>() >= 0.0);

  const auto loaded = mvfd::load_checkpoint(run / "checkpoint_stage2.ckpt");
  CHECK(loaded.info.stage == "stage2");
  CHECK(loaded.info.epoch == 2);
  CHECK(loaded.info.seed == 7);

  SECTION("repeat run is byte-identical") {
    const fs::path run2 = tmp / "run2";
    REQUIRE(run_cli("train --data " + q(tmp / "ds") + " --out " + q(run2) + kTinyTrain).code == 0);
    CHECK(slurp(run2 / "checkpoint_stage2.ckpt") == slurp(run / "checkpoint_stage2.ckpt"));
    CHECK(slurp(run2 / "checkpoint_stage1.ckpt") == slurp(run / "checkpoint_stage1.ckpt"));
  }
  SECTION("stage selection and per-epoch checkpoints") {
    const fs::path s1 = tmp / "s1";
    REQUIRE(run_cli("train --data " + q(tmp / "ds") + " --out " + q(s1) + kTinyTrain +
                    " --stage stage1 --checkpoint-every 1")
                .code == 0);
    CHECK(fs::exists(s1 / "checkpoint_stage1.ckpt"));
    CHECK(!fs::exists(s1 / "checkpoint_stage2.ckpt"));
    CHECK(fs::exists(s1 / "checkpoint_stage1_epoch_1.ckpt"));
    CHECK(fs::exists(s1 / "checkpoint_stage1_epoch_2.ckpt"));

    const fs::path s2 = tmp / "s2";
    REQUIRE(run_cli("train --data " + q(tmp / "ds") + " --out " + q(s2) + kTinyTrain +
                    " --stage stage2 --init-from " + q(s1 / "checkpoint_stage1.ckpt"))
                .code == 0);
    CHECK(fs::exists(s2 / "checkpoint_stage2.ckpt"));
    // An end-to-end run with identical seeds produces the same stage-2 weights.
    CHECK(slurp(s2 / "checkpoint_stage2.ckpt") == slurp(run / "checkpoint_stage2.ckpt"));

    CHECK(run_cli("train --data " + q(tmp / "ds") + " --out " + q(tmp / "nope") + kTinyTrain +
                  " --stage stage2")
              .code == 1);  // stage2 without --init-from
  }
  SECTION("one-stage training") {
    const fs::path os = tmp / "os";
    const auto ros = run_cli("train --data " + q(tmp / "ds") + " --out " + q(os) + kTinyTrain +
                             " --stage one_stage");
    INFO(ros.err);
    REQUIRE(ros.code == 0);
    CHECK(fs::exists(os / "checkpoint_one_stage.ckpt"));
    CHECK(mvfd::load_checkpoint(os / "checkpoint_one_stage.ckpt").info.stage == "one_stage");
  }
  SECTION("invalid inputs exit 1, missing data exits 2") {
    CHECK(run_cli("train --data " + q(tmp / "ds") + " --out " + q(tmp / "x") + kTinyTrain +
                  " --hidden-activation swish")
              .code == 1);
    CHECK(run_cli("train --data " + q(tmp / "absent") + " --out " + q(tmp / "x") + kTinyTrain)
              .code == 2);
    CHECK(run_cli("train --out " + q(tmp / "x") + kTinyTrain).code == 1);  // no --data
  }
}

TEST_CASE("cli: config layering and print-config", "[cli]") {
  TempDir tmp;
  write_text(tmp / "cfg.json", R"({"alpha": 0.9, "tau": 0.75, "seed": 31})");

  SECTION("defaults, then file, then flags") {
    const auto file_only =
        json::parse(run_cli("train --config " + q(tmp / "cfg.json") + " --print-config").out);
    CHECK(file_only.at("alpha").get<double>() == 0.9);
    CHECK(file_only.at("tau").get<double>() == 0.75);
    CHECK(file_only.at("seed").get<uint64_t>() == 31);
    CHECK(file_only.at("use_cp").get<bool>() == true);  // untouched default

    const auto flag_wins = json::parse(run_cli("train --config " + q(tmp / "cfg.json") +
                                               " --alpha 0.25 --no-gd --print-config")
                                           .out);
    CHECK(flag_wins.at("alpha").get<double>() == 0.25);
    CHECK(flag_wins.at("tau").get<double>() == 0.75);  // file value survives
    CHECK(flag_wins.at("use_gd").get<bool>() == false);
  }
  SECTION("MVFD_SEED outranks file and flags") {
    const auto r = run_cli("train --config " + q(tmp / "cfg.json") +
                           " --seed 77 --print-config", "MVFD_SEED=123");
    CHECK(json::parse(r.out).at("seed").get<uint64_t>() == 123);
    const auto bad = run_cli("train --print-config", "MVFD_SEED=pony");
    CHECK(bad.code == 1);
    CHECK(bad.err.find("MVFD_SEED") != std::string::npos);
  }
  SECTION("print-config writes nothing") {
    REQUIRE(run_cli("train --print-config").code == 0);
    CHECK(!fs::exists(fs::path("run_manifest.json")));
  }
  SECTION("config file errors exit 1") {
    write_text(tmp / "typo.json", R"({"alhpa": 0.9})");
    const auto r = run_cli("train --config " + q(tmp / "typo.json") + " --print-config");
    CHECK(r.code == 1);
    CHECK(r.err.find("alhpa") != std::string::npos);
    write_text(tmp / "broken.json", "{oops");
    CHECK(run_cli("train --config " + q(tmp / "broken.json") + " --print-config").code == 1);
    CHECK(run_cli("train --config " + q(tmp / "absent.json") + " --print-config").code == 2);
    CHECK(run_cli("train --mask-ratio 1.5 --print-config").code == 1);  // validate() rejects
  }
}

TEST_CASE("cli: eval reports metrics with mean and spread", "[cli]") {
  TempDir tmp;
  mvfd::save_dataset(tiny_dataset(48, {3, 2}, 2, 21), tmp / "ds");
  const fs::path run = tmp / "run";
  REQUIRE(run_cli("train --data " + q(tmp / "ds") + " --out " + q(run) + kTinyTrain).code == 0);

  const fs::path report = tmp / "report.json";
  const auto r = run_cli("eval --checkpoint " + q(run / "checkpoint_stage2.ckpt") + " --data " +
                         q(tmp / "ds") + " --out " + q(report));
  INFO(r.err);
  REQUIRE(r.code == 0);
  const json j = read_json(report);
  for (const char* key : {"AP", "one_minus_HL", "one_minus_RL", "AUC", "one_minus_OE",
                          "one_minus_Cov"}) {
    REQUIRE(j.contains(key));
    const double v = j.at(key).get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(j.at("n_checkpoints") == 1);
  CHECK(j.at("per_checkpoint").size() == 1);
  CHECK(j.at("per_checkpoint")[0].at("stage") == "stage2");
  CHECK(j.at("stddev").at("AP").get<double>() == 0.0);  // single checkpoint, no spread
  CHECK(read_json(tmp / "report.json.manifest.json").at("status") == "complete");
  CHECK(r.out.find("AP") != std::string::npos);  // report echoed on stdout

  SECTION("multiple checkpoints aggregate") {
    const auto r2 = run_cli("eval --checkpoint " + q(run / "checkpoint_stage1.ckpt") +
                            " --checkpoint " + q(run / "checkpoint_stage2.ckpt") + " --data " +
                            q(tmp / "ds") + " --out " + q(tmp / "two.json"));
    INFO(r2.err);
    REQUIRE(r2.code == 0);
    const json j2 = read_json(tmp / "two.json");
    CHECK(j2.at("n_checkpoints") == 2);
    CHECK(j2.at("per_checkpoint").size() == 2);
    CHECK(j2.at("mean").contains("AP"));
    CHECK(j2.at("stddev").contains("AP"));
  }
  SECTION("missing checkpoint exits 2 and leaves a failed manifest") {
    const auto r3 = run_cli("eval --checkpoint " + q(tmp / "ghost.ckpt") + " --data " +
                            q(tmp / "ds") + " --out " + q(tmp / "r3.json"));
    CHECK(r3.code == 2);
    CHECK(read_json(tmp / "r3.json.manifest.json").at("status") == "failed");
  }
}

TEST_CASE("cli: heatmap emits CSV and PGM", "[cli]") {
  TempDir tmp;
  mvfd::save_dataset(tiny_dataset(48, {3, 2}, 2, 21), tmp / "ds");
  const fs::path run = tmp / "run";
  REQUIRE(run_cli("train --data " + q(tmp / "ds") + " --out " + q(run) + kTinyTrain +
                  " --checkpoint-every 2")
              .code == 0);

  const auto r = run_cli("heatmap --checkpoint " + q(run / "checkpoint_stage2.ckpt") +
                         " --data " + q(tmp / "ds") + " --sample 0 --out-csv " +
                         q(tmp / "hm.csv") + " --out-pgm " + q(tmp / "hm.pgm") + " --scale 4");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(tmp / "hm.csv");
  CHECK(csv.rfind("name,C0,C1,S0,S1", 0) == 0);
  const std::string pgm = slurp(tmp / "hm.pgm");
  REQUIRE(pgm.rfind("P5\n16 16\n255\n", 0) == 0);  // 2m=4 cells at scale 4
  CHECK(pgm.size() == std::string("P5\n16 16\n255\n").size() + 16 * 16);

  SECTION("--run with --epoch resolves per-epoch checkpoints") {
    const auto r2 = run_cli("heatmap --run " + q(run) + " --epoch 2 --stage stage2 --data " +
                            q(tmp / "ds") + " --sample 3 --out-csv " + q(tmp / "hm2.csv"));
    INFO(r2.err);
    REQUIRE(r2.code == 0);
    CHECK(slurp(tmp / "hm2.csv").rfind("name,", 0) == 0);
    // epoch without a matching checkpoint file is an I/O problem
    CHECK(run_cli("heatmap --run " + q(run) + " --epoch 9 --data " + q(tmp / "ds") +
                  " --sample 0 --out-csv " + q(tmp / "x.csv"))
              .code == 2);
  }
  SECTION("bad arguments exit 1") {
    CHECK(run_cli("heatmap --data " + q(tmp / "ds") + " --sample 0 --out-csv " +
                  q(tmp / "x.csv"))
              .code == 1);  // neither --checkpoint nor --run
    CHECK(run_cli("heatmap --checkpoint " + q(run / "checkpoint_stage2.ckpt") + " --data " +
                  q(tmp / "ds") + " --sample 999 --out-csv " + q(tmp / "x.csv"))
              .code == 1);  // sample out of range
    CHECK(run_cli("heatmap --checkpoint " + q(run / "checkpoint_stage2.ckpt") + " --data " +
                  q(tmp / "ds") + " --sample 0")
              .code == 1);  // no outputs requested
  }
}

TEST_CASE("cli: grid sweep produces tables", "[cli]") {
  TempDir tmp;
  const auto full = tiny_dataset(40, {3, 2}, 2, 33);
  mvfd::CorruptionSpec spec;
  spec.view_missing_rate = 0.25;
  spec.label_missing_rate = 0.25;
  spec.train_fraction = 0.7;
  spec.seed = 2;
  const auto split = mvfd::simulate_incompleteness(full, spec);
  mvfd::save_dataset(split.train, tmp / "train");
  mvfd::save_dataset(split.test, tmp / "test");

  const auto r = run_cli("grid --train " + q(tmp / "train") + " --test " + q(tmp / "test") +
                         kTinyTrain +
                         " --axis1 alpha=0.1,0.5 --axis2 tau=1.0 --jobs 2 --out-csv " +
                         q(tmp / "grid.csv") + " --out-json " + q(tmp / "grid.json"));
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(tmp / "grid.csv");
  CHECK(csv.rfind("alpha,tau,AP", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 cells
  const json j = read_json(tmp / "grid.json");
  CHECK(j.at("axis1").at("name") == "alpha");
  CHECK(j.at("cells").size() == 2);
  CHECK(read_json(tmp / "grid.csv.manifest.json").at("status") == "complete");

  CHECK(run_cli("grid --train " + q(tmp / "train") + " --test " + q(tmp / "test") +
                " --axis1 epochs=1,2 --axis2 tau=1.0 --out-csv " + q(tmp / "x.csv"))
            .code == 1);  // unknown axis name
  CHECK(run_cli("grid --train " + q(tmp / "train") + " --test " + q(tmp / "test") +
                " --axis1 alpha=0.1 --axis2 tau=1.0")
            .code == 1);  // no output requested
}

TEST_CASE("cli: ablation suite emits all variants", "[cli]") {
  TempDir tmp;
  const auto full = tiny_dataset(40, {3, 2}, 2, 34);
  mvfd::CorruptionSpec spec;
  spec.seed = 3;
  const auto split = mvfd::simulate_incompleteness(full, spec);
  mvfd::save_dataset(split.train, tmp / "train");
  mvfd::save_dataset(split.test, tmp / "test");

  const auto r = run_cli("ablate --train " + q(tmp / "train") + " --test " + q(tmp / "test") +
                         kTinyTrain + " --seeds 5 --jobs 3 --out-csv " + q(tmp / "ab.csv") +
                         " --out-json " + q(tmp / "ab.json"));
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(tmp / "ab.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 9 variants
  CHECK(csv.find("backbone") != std::string::npos);
  CHECK(csv.find("one_stage") != std::string::npos);
  const json j = read_json(tmp / "ab.json");
  REQUIRE(j.size() == 9);
  bool saw_full = false;
  for (const auto& row : j) {
    if (row.at("variant") == "full") {
      saw_full = true;
      CHECK(row.at("per_seed").size() == 1);
      CHECK(row.at("per_seed")[0].at("seed") == 5);
      CHECK(row.at("mean").contains("AP"));
    }
  }
  CHECK(saw_full);
  const json manifest = read_json(tmp / "ab.csv.manifest.json");
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("seeds") == json::array({5}));

  CHECK(run_cli("ablate --train " + q(tmp / "train") + " --test " + q(tmp / "test") +
                " --seeds 1,zebra --out-csv " + q(tmp / "x.csv"))
            .code == 1);
}
