#pragma once

// Ingestion of external data into the dataset directory format.
//  - CSV: one file per view plus one label file, plain numeric cells.
//  - MAT: MATLAB Level-5 files (the common v6/v7 containers), supporting 2-D
//    numeric/logical matrices, cell arrays of such matrices, and zlib
//    (miCOMPRESSED) elements. v7.3 files are HDF5 and are rejected with a hint
//    to re-save with '-v7'.
// Converted datasets are complete: indicators are all ones.

#include "mvfd/common.hpp"
#include "mvfd/data.hpp"

#include <zlib.h>

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mvfd {

// ---- CSV ------------------------------------------------------------------

inline Mat read_csv_matrix(const std::filesystem::path& path, bool skip_header = false) {
  std::ifstream in(path);
  io_require(in.good(), "cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && skip_header) continue;
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      const char* cell_end = p;
      while (cell_end < end && *cell_end != ',') ++cell_end;
      while (p < cell_end && (*p == ' ' || *p == '\t')) ++p;
      const char* trimmed_end = cell_end;
      while (trimmed_end > p && (trimmed_end[-1] == ' ' || trimmed_end[-1] == '\t'))
        --trimmed_end;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(p, trimmed_end, value);
      require(ec == std::errc() && ptr == trimmed_end,
              "'" + path.string() + "' line " + std::to_string(line_no) +
                  ": cell is not numeric: '" + std::string(p, trimmed_end) + "'");
      row.push_back(value);
      if (cell_end == end) break;
      p = cell_end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + " has " +
                            std::to_string(row.size()) + " cells, expected " +
                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "'" + path.string() + "' holds no data rows");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

// ---- MATLAB Level-5 ---------------------------------------------------------

struct MatVariable {
  std::string name;
  bool is_cell = false;
  Mat matrix;              // valid when !is_cell
  std::vector<Mat> cells;  // valid when is_cell
};

namespace detail {

// Data element type tags.
enum : uint32_t {
  kMiInt8 = 1,
  kMiUint8 = 2,
  kMiInt16 = 3,
  kMiUint16 = 4,
  kMiInt32 = 5,
  kMiUint32 = 6,
  kMiSingle = 7,
  kMiDouble = 9,
  kMiInt64 = 12,
  kMiUint64 = 13,
  kMiMatrix = 14,
  kMiCompressed = 15,
  kMiUtf8 = 16,
};

// Array class tags.
enum : uint32_t {
  kMxCell = 1,
  kMxStruct = 2,
  kMxObject = 3,
  kMxChar = 4,
  kMxSparse = 5,
  kMxDouble = 6,
  kMxSingle = 7,
  kMxInt8 = 8,
  kMxUint8 = 9,
  kMxInt16 = 10,
  kMxUint16 = 11,
  kMxInt32 = 12,
  kMxUint32 = 13,
  kMxInt64 = 14,
  kMxUint64 = 15,
};

struct MatCursor {
  const unsigned char* data;
  size_t size;
  size_t off = 0;
  bool done() const { return off >= size; }
};

struct MatElement {
  uint32_t type;
  const unsigned char* data;
  size_t size;
};

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline MatElement next_element(MatCursor& c) {
  require(c.off + 8 <= c.size, "MAT file: truncated element tag");
  const uint32_t word = read_le<uint32_t>(c.data + c.off);
  MatElement e{};
  if ((word & 0xffff0000u) != 0) {
    // Small data element: size in the upper half, payload in the next 4 bytes.
    e.type = word & 0xffffu;
    e.size = word >> 16;
    require(e.size <= 4, "MAT file: small element with size > 4");
    e.data = c.data + c.off + 4;
    c.off += 8;
    return e;
  }
  e.type = word;
  const uint32_t bytes = read_le<uint32_t>(c.data + c.off + 4);
  e.size = bytes;
  e.data = c.data + c.off + 8;
  require(c.off + 8 + bytes <= c.size, "MAT file: element payload overruns the file");
  c.off += 8 + bytes;
  c.off = (c.off + 7) & ~size_t{7};  // elements are 8-byte aligned
  return e;
}

inline std::vector<double> widen_numeric(const MatElement& e) {
  std::vector<double> out;
  auto widen = [&out, &e](auto tag) {
    using T = decltype(tag);
    require(e.size % sizeof(T) == 0, "MAT file: numeric payload size mismatch");
    const size_t n = e.size / sizeof(T);
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<double>(read_le<T>(e.data + i * sizeof(T)));
  };
  switch (e.type) {
    case kMiInt8: widen(int8_t{}); break;
    case kMiUint8: widen(uint8_t{}); break;
    case kMiInt16: widen(int16_t{}); break;
    case kMiUint16: widen(uint16_t{}); break;
    case kMiInt32: widen(int32_t{}); break;
    case kMiUint32: widen(uint32_t{}); break;
    case kMiSingle: widen(float{}); break;
    case kMiDouble: widen(double{}); break;
    case kMiInt64: widen(int64_t{}); break;
    case kMiUint64: widen(uint64_t{}); break;
    default:
      throw ValidationError("MAT file: unsupported numeric element type " +
                            std::to_string(e.type));
  }
  return out;
}

inline std::vector<unsigned char> zlib_inflate(const unsigned char* data, size_t size) {
  std::vector<unsigned char> out(std::max<size_t>(size * 4, 1 << 16));
  z_stream zs{};
  io_require(inflateInit(&zs) == Z_OK, "zlib: inflateInit failed");
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(size);
  size_t written = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ValidationError("MAT file: corrupt compressed element (zlib rc " +
                            std::to_string(rc) + ")");
    }
    written = out.size() - zs.avail_out;
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

struct ParsedArray {
  std::string name;
  bool is_cell = false;
  Mat matrix;
  std::vector<Mat> cells;
};

inline ParsedArray parse_matrix_element(const MatElement& e);

inline Mat numeric_from_payload(const std::vector<double>& data, int64_t rows, int64_t cols) {
  require(static_cast<int64_t>(data.size()) == rows * cols,
          "MAT file: payload length disagrees with dimensions");
  Mat m(rows, cols);
  // MATLAB stores column-major.
  for (int64_t j = 0; j < cols; ++j)
    for (int64_t i = 0; i < rows; ++i) m(i, j) = data[static_cast<size_t>(j * rows + i)];
  return m;
}

inline ParsedArray parse_matrix_body(MatCursor& c) {
  const MatElement flags_el = next_element(c);
  require(flags_el.type == kMiUint32 && flags_el.size >= 8, "MAT file: bad array flags");
  const uint32_t flags_word = read_le<uint32_t>(flags_el.data);
  const uint32_t array_class = flags_word & 0xffu;
  const bool is_complex = (flags_word & 0x0800u) != 0;
  require(!is_complex, "MAT file: complex arrays are not supported");

  const MatElement dims_el = next_element(c);
  require(dims_el.type == kMiInt32, "MAT file: bad dimensions element");
  const size_t ndims = dims_el.size / 4;
  require(ndims == 2, "MAT file: only 2-D arrays are supported (got " + std::to_string(ndims) +
                          " dims)");
  const auto rows = static_cast<int64_t>(read_le<int32_t>(dims_el.data));
  const auto cols = static_cast<int64_t>(read_le<int32_t>(dims_el.data + 4));

  const MatElement name_el = next_element(c);
  require(name_el.type == kMiInt8 || name_el.type == kMiUtf8, "MAT file: bad array name element");
  ParsedArray out;
  out.name.assign(reinterpret_cast<const char*>(name_el.data), name_el.size);

  if (array_class == kMxCell) {
    out.is_cell = true;
    const auto count = rows * cols;
    require(rows == 1 || cols == 1, "MAT file: only vector-shaped cell arrays are supported");
    for (int64_t k = 0; k < count; ++k) {
      const MatElement cell = next_element(c);
      require(cell.type == kMiMatrix, "MAT file: cell array entry is not a matrix");
      ParsedArray inner = parse_matrix_element(cell);
      require(!inner.is_cell, "MAT file: nested cell arrays are not supported");
      out.cells.push_back(std::move(inner.matrix));
    }
    return out;
  }

  switch (array_class) {
    case kMxDouble:
    case kMxSingle:
    case kMxInt8:
    case kMxUint8:
    case kMxInt16:
    case kMxUint16:
    case kMxInt32:
    case kMxUint32:
    case kMxInt64:
    case kMxUint64:
      break;
    case kMxSparse:
      throw ValidationError("MAT file: sparse arrays are not supported; convert to full");
    case kMxChar:
      throw ValidationError("MAT file: char arrays are not supported");
    case kMxStruct:
    case kMxObject:
      throw ValidationError("MAT file: struct/object arrays are not supported");
    default:
      throw ValidationError("MAT file: unsupported array class " + std::to_string(array_class));
  }
  const MatElement real_el = next_element(c);
  out.matrix = numeric_from_payload(widen_numeric(real_el), rows, cols);
  return out;
}

inline ParsedArray parse_matrix_element(const MatElement& e) {
  MatCursor c{e.data, e.size, 0};
  return parse_matrix_body(c);
}

}  // namespace detail

inline std::vector<MatVariable> read_mat_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  io_require(in.good(), "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  require(bytes.size() >= 128, "'" + path.string() + "' is too short to be a MAT file");
  if (bytes[0] == 0x89 && bytes[1] == 'H' && bytes[2] == 'D' && bytes[3] == 'F') {
    throw ValidationError("'" + path.string() +
                          "' is a v7.3 (HDF5) MAT file; re-save it with \"save -v7\"");
  }
  const std::string header(reinterpret_cast<const char*>(bytes.data()), 116);
  require(header.rfind("MATLAB 5.0", 0) == 0 || header.find("MATLAB") != std::string::npos,
          "'" + path.string() + "' does not look like a Level-5 MAT file");
  const unsigned char ei0 = bytes[126], ei1 = bytes[127];
  require(ei0 == 'I' && ei1 == 'M',
          "'" + path.string() + "' is big-endian or corrupt (endian marker mismatch)");

  std::vector<MatVariable> vars;
  detail::MatCursor c{bytes.data(), bytes.size(), 128};
  while (!c.done()) {
    if (c.size - c.off < 8) break;  // trailing padding
    detail::MatElement e = detail::next_element(c);
    std::vector<unsigned char> inflated;
    if (e.type == detail::kMiCompressed) {
      inflated = detail::zlib_inflate(e.data, e.size);
      detail::MatCursor ic{inflated.data(), inflated.size(), 0};
      e = detail::next_element(ic);
    }
    if (e.type != detail::kMiMatrix) continue;  // skip non-array elements
    detail::ParsedArray pa = detail::parse_matrix_element(e);
    MatVariable v;
    v.name = std::move(pa.name);
    v.is_cell = pa.is_cell;
    v.matrix = std::move(pa.matrix);
    v.cells = std::move(pa.cells);
    vars.push_back(std::move(v));
  }
  require(!vars.empty(), "'" + path.string() + "' holds no supported array variables");
  return vars;
}

// ---- Dataset assembly -------------------------------------------------------

namespace detail {

// Accepts {0,1} or {-1,+1} label encodings; -1 maps to 0.
inline Mat normalize_labels(Mat y, const std::string& origin) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == -1.0) y(i) = 0.0;
    require(y(i) == 0.0 || y(i) == 1.0,
            origin + ": labels must be 0/1 or -1/+1 (found " + std::to_string(y(i)) + ")");
  }
  return y;
}

}  // namespace detail

inline MultiViewDataset assemble_complete_dataset(std::vector<Mat> views, Mat labels,
                                                  std::vector<std::string> view_names,
                                                  const std::string& provenance) {
  MultiViewDataset ds;
  require(!views.empty(), "convert: need at least one view");
  const auto n = labels.rows();
  for (size_t v = 0; v < views.size(); ++v) {
    require(views[v].rows() == n,
            "convert: view " + std::to_string(v) + " has " + std::to_string(views[v].rows()) +
                " rows but labels have " + std::to_string(n) +
                " (transpose the inputs if the data is stored feature-major)");
  }
  ds.views = std::move(views);
  ds.labels = detail::normalize_labels(std::move(labels), "convert");
  ds.view_indicator = Mat::Ones(n, static_cast<Eigen::Index>(ds.views.size()));
  ds.label_indicator = Mat::Ones(n, ds.labels.cols());
  ds.meta.view_names = std::move(view_names);
  ds.meta.provenance = provenance;
  ds.validate();
  return ds;
}

}  // namespace mvfd
