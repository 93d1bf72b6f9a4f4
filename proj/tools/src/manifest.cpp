#include "schn_cli/manifest.hpp"

#include <fstream>

#include "schn/errors.hpp"

#ifndef SCHN_VERSION
#define SCHN_VERSION "0.0.0"
#endif

namespace schn::cli {

nlohmann::json RunManifest::to_json() const {
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {{"command", command}, {"config", config},   {"seed", seed},
          {"tool", "schn"},     {"version", SCHN_VERSION}, {"inputs", inputs},
          {"outputs", outputs}, {"wall_time_s", elapsed}};
}

void RunManifest::write(const std::filesystem::path& path) const { write_json(path, to_json()); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace schn::cli
