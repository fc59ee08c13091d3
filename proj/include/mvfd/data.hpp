#pragma once

// Multi-view dataset container and its directory format:
//   manifest.json            n, m, c, view names/dims, dtype/layout tags
//   view_<k>.bin             n x d_k raw little-endian f64, row-major
//   labels.bin, W.bin, G.bin same encoding
// W (n x m) marks available views, G (n x c) observed labels. Rows of a
// missing view are stored as zeros; which entries are trusted is always
// decided by the indicators, never by sentinel values.

#include "mvfd/common.hpp"

#include <json.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mvfd {

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian; big-endian hosts are unsupported");

struct DatasetMeta {
  std::vector<std::string> view_names;
  std::string provenance;  // free-form description of how the data was produced
};

struct MultiViewDataset {
  std::vector<Mat> views;  // m matrices, n x d_v
  Mat labels;              // n x c in {0,1}
  Mat view_indicator;      // n x m in {0,1}, every row sum >= 1
  Mat label_indicator;     // n x c in {0,1}
  DatasetMeta meta;

  int64_t n() const { return labels.rows(); }
  int num_views() const { return static_cast<int>(views.size()); }
  int num_labels() const { return static_cast<int>(labels.cols()); }
  std::vector<int> view_dims() const {
    std::vector<int> d;
    for (const auto& v : views) d.push_back(static_cast<int>(v.cols()));
    return d;
  }

  void validate() const {
    require(!views.empty(), "dataset: need at least one view");
    const int64_t rows = n();
    const int m = num_views();
    const int c = num_labels();
    require(rows >= 1, "dataset: need at least one sample");
    require(c >= 1, "dataset: need at least one label column");
    require(meta.view_names.size() == views.size(),
            "dataset: view_names count disagrees with view count");
    for (int v = 0; v < m; ++v) {
      require(views[static_cast<size_t>(v)].rows() == rows,
              "dataset: view " + std::to_string(v) + " row count disagrees with labels");
      require(views[static_cast<size_t>(v)].cols() >= 1,
              "dataset: view " + std::to_string(v) + " has no features");
    }
    require(view_indicator.rows() == rows && view_indicator.cols() == m,
            "dataset: view indicator must be n x m");
    require(label_indicator.rows() == rows && label_indicator.cols() == c,
            "dataset: label indicator must be n x c");
    check_binary(labels, "labels");
    check_binary(view_indicator, "view indicator");
    check_binary(label_indicator, "label indicator");
    for (Eigen::Index i = 0; i < rows; ++i) {
      require(view_indicator.row(i).sum() >= 1.0,
              "dataset: sample " + std::to_string(i) + " has no available view");
      for (int v = 0; v < m; ++v) {
        if (view_indicator(i, v) == 0.0) {
          require(views[static_cast<size_t>(v)].row(i).isZero(0.0),
                  "dataset: sample " + std::to_string(i) + " view " + std::to_string(v) +
                      " is flagged missing but holds nonzero features");
        }
      }
    }
  }

  // FNV-1a over all payload bytes in a fixed order; identifies the exact data
  // a run consumed.
  std::string fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto fold = [&h](const Mat& m) {
      h = fnv1a64(m.data(), static_cast<size_t>(m.size()) * sizeof(double), h);
    };
    for (const auto& v : views) fold(v);
    fold(labels);
    fold(view_indicator);
    fold(label_indicator);
    return to_hex(h);
  }

 private:
  static void check_binary(const Mat& m, const std::string& what) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      require(m(i) == 0.0 || m(i) == 1.0,
              "dataset: " + what + " contains a value other than 0/1");
    }
  }
};

namespace detail {

inline void write_matrix(const std::filesystem::path& path, const Mat& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  io_require(out.good(), "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(static_cast<size_t>(m.size()) * sizeof(double)));
  io_require(out.good(), "short write to '" + path.string() + "'");
}

inline Mat read_matrix(const std::filesystem::path& path, int64_t rows, int64_t cols) {
  std::ifstream in(path, std::ios::binary);
  io_require(in.good(), "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<uint64_t>(in.tellg());
  const uint64_t expected = static_cast<uint64_t>(rows) * static_cast<uint64_t>(cols) * 8u;
  if (actual != expected) {
    throw ValidationError("'" + path.string() + "' holds " + std::to_string(actual) +
                          " bytes but the manifest implies " + std::to_string(expected) + " (" +
                          std::to_string(rows) + " x " + std::to_string(cols) + " f64)");
  }
  in.seekg(0, std::ios::beg);
  Mat m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(expected));
  io_require(in.good(), "short read from '" + path.string() + "'");
  return m;
}

}  // namespace detail

inline void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  io_require(!ec, "cannot create dataset directory '" + dir.string() + "': " + ec.message());

  nlohmann::json manifest;
  manifest["format"] = "mvfd-dataset";
  manifest["version"] = 1;
  manifest["n"] = ds.n();
  manifest["m"] = ds.num_views();
  manifest["c"] = ds.num_labels();
  manifest["view_names"] = ds.meta.view_names;
  manifest["d_v"] = ds.view_dims();
  manifest["dtype"] = "f64";
  manifest["endianness"] = "little";
  manifest["layout"] = "row-major";
  manifest["provenance"] = ds.meta.provenance;

  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    io_require(out.good(), "cannot write '" + (dir / "manifest.json").string() + "'");
    out << manifest.dump(2) << "\n";
    io_require(out.good(), "short write to manifest.json");
  }
  for (int v = 0; v < ds.num_views(); ++v) {
    detail::write_matrix(dir / ("view_" + std::to_string(v) + ".bin"),
                         ds.views[static_cast<size_t>(v)]);
  }
  detail::write_matrix(dir / "labels.bin", ds.labels);
  detail::write_matrix(dir / "W.bin", ds.view_indicator);
  detail::write_matrix(dir / "G.bin", ds.label_indicator);
}

inline MultiViewDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  io_require(in.good(), "cannot open '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed manifest.json: " + std::string(e.what()));
  }

  require(manifest.value("format", "") == "mvfd-dataset",
          "manifest.json: unexpected format tag '" + manifest.value("format", "") + "'");
  require(manifest.value("dtype", "") == "f64", "manifest.json: only dtype f64 is supported");
  require(manifest.value("endianness", "") == "little",
          "manifest.json: only little-endian payloads are supported");
  require(manifest.value("layout", "") == "row-major",
          "manifest.json: only row-major payloads are supported");

  MultiViewDataset ds;
  int64_t n = 0;
  int m = 0, c = 0;
  std::vector<int> dims;
  try {
    n = manifest.at("n").get<int64_t>();
    m = manifest.at("m").get<int>();
    c = manifest.at("c").get<int>();
    dims = manifest.at("d_v").get<std::vector<int>>();
    ds.meta.view_names = manifest.at("view_names").get<std::vector<std::string>>();
    ds.meta.provenance = manifest.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest.json is missing required fields: " + std::string(e.what()));
  }
  require(m >= 1 && static_cast<int>(dims.size()) == m,
          "manifest.json: d_v must list one dimension per view");
  require(static_cast<int>(ds.meta.view_names.size()) == m,
          "manifest.json: view_names must list one name per view");

  for (int v = 0; v < m; ++v) {
    ds.views.push_back(detail::read_matrix(dir / ("view_" + std::to_string(v) + ".bin"), n,
                                           dims[static_cast<size_t>(v)]));
  }
  ds.labels = detail::read_matrix(dir / "labels.bin", n, c);
  ds.view_indicator = detail::read_matrix(dir / "W.bin", n, m);
  ds.label_indicator = detail::read_matrix(dir / "G.bin", n, c);
  ds.validate();
  return ds;
}

// Row subset, preserving order of `rows`.
inline MultiViewDataset take_rows(const MultiViewDataset& ds, const std::vector<int64_t>& rows) {
  MultiViewDataset out;
  out.meta = ds.meta;
  const auto nr = static_cast<Eigen::Index>(rows.size());
  for (const auto& v : ds.views) {
    Mat sub(nr, v.cols());
    for (Eigen::Index i = 0; i < nr; ++i) sub.row(i) = v.row(rows[static_cast<size_t>(i)]);
    out.views.push_back(std::move(sub));
  }
  auto slice = [&rows, nr](const Mat& m) {
    Mat sub(nr, m.cols());
    for (Eigen::Index i = 0; i < nr; ++i) sub.row(i) = m.row(rows[static_cast<size_t>(i)]);
    return sub;
  };
  out.labels = slice(ds.labels);
  out.view_indicator = slice(ds.view_indicator);
  out.label_indicator = slice(ds.label_indicator);
  return out;
}

}  // namespace mvfd
