#include "jdiff/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace jdiff {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("sha256_file: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return sha256_hex(buf.str());
}

void RunManifest::add_file(const std::string& path) { file_digests[path] = sha256_file(path); }

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["config_echo"] = config_echo;
  j["code_version"] = code_version;
  j["dataset_digest"] = dataset_digest;
  j["file_digests"] = file_digests;
  j["timings_sec"] = timings_sec;
  j["metrics"] = metrics;
  j["notes"] = notes;
  j["status"] = status;
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot write '" + tmp + "'");
    os << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("manifest: cannot rename '" + tmp + "' to '" + path + "'");
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(is);
  RunManifest m;
  m.command = j.value("command", "");
  m.config_digest = j.value("config_digest", "");
  m.config_echo = j.value("config_echo", "");
  m.code_version = j.value("code_version", "");
  m.dataset_digest = j.value("dataset_digest", "");
  m.file_digests = j.value("file_digests", std::map<std::string, std::string>{});
  m.timings_sec = j.value("timings_sec", std::map<std::string, double>{});
  m.metrics = j.value("metrics", std::map<std::string, double>{});
  m.notes = j.value("notes", std::map<std::string, std::string>{});
  m.status = j.value("status", "");
  return m;
}

std::vector<std::string> RunManifest::verify() const {
  std::vector<std::string> bad;
  for (const auto& [path, digest] : file_digests) {
    try {
      if (sha256_file(path) != digest) bad.push_back(path);
    } catch (const std::exception&) {
      bad.push_back(path);
    }
  }
  return bad;
}

}  // namespace jdiff
