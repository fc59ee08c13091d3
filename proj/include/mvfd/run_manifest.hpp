#pragma once

// Every CLI invocation that produces files writes a run_manifest.json next to
// its outputs *before* doing real work (status "running"), then rewrites it on
// completion with timing and final status. Each result file is traceable to
// exactly one manifest via the outputs list.

#include "mvfd/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mvfd {

struct RunManifest {
  std::string tool_version = kVersion;
  std::string subcommand;
  std::vector<std::string> command_line;
  nlohmann::json config;  // resolved configuration, after all layering
  std::vector<std::string> dataset_fingerprints;
  std::vector<uint64_t> seeds;
  std::vector<std::string> outputs;  // paths this run will (try to) produce
  std::string started_at;
  std::string status = "running";  // running | complete | failed
  double duration_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"format", "mvfd-run-manifest"},
            {"version", 1},
            {"tool_version", tool_version},
            {"subcommand", subcommand},
            {"command_line", command_line},
            {"config", config},
            {"dataset_fingerprints", dataset_fingerprints},
            {"seeds", seeds},
            {"outputs", outputs},
            {"started_at", started_at},
            {"status", status},
            {"duration_seconds", duration_seconds}};
  }

  void write(const std::filesystem::path& path) const {
    std::error_code ec;
    const auto parent = path.parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path, std::ios::trunc);
    io_require(out.good(), "cannot write run manifest '" + path.string() + "'");
    out << to_json().dump(2) << "\n";
    io_require(out.good(), "short write to '" + path.string() + "'");
  }
};

}  // namespace mvfd
