#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace kanc::cli {

// Lowercase hex SHA-256 of a file's bytes. Throws IoError.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

// Written next to every command's outputs. Holds no timestamps, so identical
// runs produce identical manifests.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // resolved settings
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string version;

  void add_input(const std::filesystem::path& path);
  std::string text() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace kanc::cli
