#pragma once

// Pipeline driver: simulate, train, predict, evaluate, compare.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace ronin::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternalError = 1;
inline constexpr int kInputError = 2;

struct RunManifest {
  std::string command;
  std::string config_hash;  // FNV-1a 64 of the resolved config, hex
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = kToolkitVersion;
  double wall_time_s = 0.0;
};

nlohmann::json to_json(const RunManifest& m);
std::string fnv1a_hex(const std::string& bytes);

// Writes via a temporary sibling and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
// `<artifact>.manifest.json` next to the artifact.
std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);

// Entry point shared by the executable and in-process tests.
int run_cli(int argc, const char* const* argv);

}  // namespace ronin::cli
