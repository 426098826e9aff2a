#pragma once

#include <dln/io.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dln::cli {

/// Relative paths land under $DLNLAB_OUTPUT_DIR when it is set.
std::filesystem::path resolve_output(const std::string& path);

/// Record of one command invocation, written next to its primary output.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string started;
  std::string finished;
  std::vector<std::filesystem::path> outputs;
  std::string version;
};

Json manifest_to_json(const RunManifest& m);

/// "p.json" -> "p.manifest.json".
std::filesystem::path manifest_path(const std::filesystem::path& primary);

/// Checks that every listed output exists, stamps `finished` and writes the
/// manifest; returns its path.
std::filesystem::path write_manifest(RunManifest m, const std::filesystem::path& primary);

/// Current UTC time, ISO 8601 with seconds.
std::string utc_timestamp();

}  // namespace dln::cli
