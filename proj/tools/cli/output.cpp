#include "output.hpp"

#include <dln/errors.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace dln::cli {

namespace fs = std::filesystem;

fs::path resolve_output(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* dir = std::getenv("DLNLAB_OUTPUT_DIR"); dir != nullptr && *dir != '\0') return fs::path(dir) / p;
  return p;
}

Json manifest_to_json(const RunManifest& m) {
  Json outputs = Json::array();
  for (const auto& p : m.outputs) outputs.push_back(p.string());
  return Json{{"command", m.command},  {"config_hash", m.config_hash}, {"started", m.started},
              {"finished", m.finished}, {"outputs", outputs},          {"version", m.version}};
}

fs::path manifest_path(const fs::path& primary) {
  fs::path out = primary;
  out.replace_extension(".manifest.json");
  return out;
}

fs::path write_manifest(RunManifest m, const fs::path& primary) {
  for (const auto& p : m.outputs) {
    if (!fs::exists(p)) throw Error(ErrorKind::ParseError, "listed output " + p.string() + " was not written");
  }
  m.finished = utc_timestamp();
  const fs::path path = manifest_path(primary);
  write_text_file(path, manifest_to_json(m).dump(2) + "\n");
  return path;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace dln::cli
