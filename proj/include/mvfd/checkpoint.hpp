#pragma once

// Single-file checkpoint archive:
//   bytes 0..7   magic "MVFDCKP1"
//   bytes 8..15  u64 little-endian manifest length
//   manifest     JSON: architecture, stage, epoch, seed, blob directory
//   blobs        raw row-major f64 payloads, in manifest order
// Writes go to a temp file in the target directory followed by an atomic
// rename, so readers never observe a partial checkpoint.

#include "mvfd/common.hpp"
#include "mvfd/mlp.hpp"
#include "mvfd/model.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mvfd {

inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'F', 'D', 'C', 'K', 'P', '1'};

struct CheckpointInfo {
  std::string stage;  // "stage1", "stage2", or "one_stage"
  int64_t epoch = 0;  // epochs completed in that stage
  uint64_t seed = 0;
};

namespace detail {

struct BlobRef {
  std::string name;
  const Mat* mat;
};

inline void collect_group(std::vector<BlobRef>& blobs, const std::string& prefix, const Mlp& mlp) {
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    blobs.push_back({prefix + ".layer" + std::to_string(l) + ".weight", &mlp.layers[l].weight});
    blobs.push_back({prefix + ".layer" + std::to_string(l) + ".bias", &mlp.layers[l].bias});
  }
}

inline std::vector<BlobRef> model_blobs(const ModelParams& p) {
  std::vector<BlobRef> blobs;
  for (int v = 0; v < p.num_views(); ++v) {
    const auto sv = static_cast<size_t>(v);
    const std::string idx = std::to_string(v);
    collect_group(blobs, "consistent_encoder." + idx, p.consistent_encoders[sv]);
    collect_group(blobs, "consistent_decoder." + idx, p.consistent_decoders[sv]);
    collect_group(blobs, "specific_encoder." + idx, p.specific_encoders[sv]);
    collect_group(blobs, "specific_decoder." + idx, p.specific_decoders[sv]);
  }
  collect_group(blobs, "shared_classifier", p.shared_classifier);
  collect_group(blobs, "fused_classifier", p.fused_classifier);
  return blobs;
}

// Mutable counterpart used when loading.
inline std::vector<std::pair<std::string, Mat*>> model_blobs_mutable(ModelParams& p) {
  std::vector<std::pair<std::string, Mat*>> out;
  for (const BlobRef& b : model_blobs(p)) out.emplace_back(b.name, const_cast<Mat*>(b.mat));
  return out;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const CheckpointInfo& info,
                            const std::filesystem::path& path) {
  require(info.stage == "stage1" || info.stage == "stage2" || info.stage == "one_stage",
          "save_checkpoint: stage must be stage1|stage2|one_stage");
  const auto blobs = detail::model_blobs(params);

  nlohmann::json manifest;
  manifest["format"] = "mvfd-checkpoint";
  manifest["version"] = 1;
  manifest["stage"] = info.stage;
  manifest["epoch"] = info.epoch;
  manifest["seed"] = info.seed;
  manifest["view_dims"] = params.view_dims;
  manifest["num_labels"] = params.num_labels;
  manifest["embed_dim"] = params.arch.embed_dim;
  manifest["hidden_dim"] = params.arch.hidden_dim;
  manifest["hidden_activation"] = activation_name(params.arch.hidden_activation);
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& b : blobs)
    dir.push_back({{"name", b.name}, {"rows", b.mat->rows()}, {"cols", b.mat->cols()}});
  manifest["blobs"] = dir;
  const std::string text = manifest.dump();

  std::error_code ec;
  const auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    io_require(out.good(), "cannot open '" + tmp + "' for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) {
      out.write(reinterpret_cast<const char*>(b.mat->data()),
                static_cast<std::streamsize>(static_cast<size_t>(b.mat->size()) * sizeof(double)));
    }
    io_require(out.good(), "short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  io_require(!ec, "cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointInfo info;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  io_require(in.good(), "cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  io_require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
             "'" + path.string() + "' is not a checkpoint (bad magic)");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  io_require(in.good() && len > 0 && len < (1ull << 30), "checkpoint manifest length is implausible");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  io_require(in.good(), "checkpoint manifest truncated");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  require(manifest.value("format", "") == "mvfd-checkpoint",
          "checkpoint: unexpected format tag");
  require(manifest.value("version", 0) == 1, "checkpoint: unsupported version");

  LoadedCheckpoint lc;
  try {
    lc.info.stage = manifest.at("stage").get<std::string>();
    lc.info.epoch = manifest.at("epoch").get<int64_t>();
    lc.info.seed = manifest.at("seed").get<uint64_t>();
    ArchConfig arch;
    arch.embed_dim = manifest.at("embed_dim").get<int>();
    arch.hidden_dim = manifest.at("hidden_dim").get<int>();
    arch.hidden_activation =
        activation_from_name(manifest.at("hidden_activation").get<std::string>());
    const auto view_dims = manifest.at("view_dims").get<std::vector<int>>();
    const int num_labels = manifest.at("num_labels").get<int>();
    // Seed irrelevant here: every parameter is overwritten from the blobs.
    lc.params = ModelParams::init(view_dims, num_labels, arch, 0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint manifest is missing fields: " + std::string(e.what()));
  }

  auto slots = detail::model_blobs_mutable(lc.params);
  const auto& dir = manifest.at("blobs");
  require(dir.is_array() && dir.size() == slots.size(),
          "checkpoint: blob directory does not match the declared architecture");
  for (size_t k = 0; k < slots.size(); ++k) {
    const auto& entry = dir[k];
    require(entry.value("name", "") == slots[k].first,
            "checkpoint: blob order mismatch at '" + slots[k].first + "'");
    const auto rows = entry.at("rows").get<int64_t>();
    const auto cols = entry.at("cols").get<int64_t>();
    require(rows == slots[k].second->rows() && cols == slots[k].second->cols(),
            "checkpoint: blob '" + slots[k].first + "' has unexpected shape");
    in.read(reinterpret_cast<char*>(slots[k].second->data()),
            static_cast<std::streamsize>(static_cast<size_t>(rows * cols) * sizeof(double)));
    io_require(in.good(), "checkpoint payload truncated at '" + slots[k].first + "'");
  }
  return lc;
}

}  // namespace mvfd
