#pragma once

#include <map>
#include <string>
#include <vector>

namespace jdiff {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Reproducibility record written atomically at the end of each subcommand.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::string config_echo;
  std::string code_version;
  std::string dataset_digest;
  std::map<std::string, std::string> file_digests;  // path -> sha256
  std::map<std::string, double> timings_sec;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> notes;
  std::string status = "ok";

  void add_file(const std::string& path);
  // Writes to a temp file then renames into place.
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
  // Recomputes file digests; returns mismatched paths.
  std::vector<std::string> verify() const;
};

}  // namespace jdiff
