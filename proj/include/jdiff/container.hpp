#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jdiff/tensor.hpp"

namespace jdiff {

// On-disk record container: magic "JDCK", u32 version, then repeated records
// of (u32 name length, UTF-8 name, u8 dtype tag, u8 rank, u64 extents,
// little-endian payload). Checkpoints, dataset caches, and sample dumps all
// share this format.
enum class Dtype : uint8_t { F64 = 0, F32 = 1, U8 = 2, I64 = 3 };

struct Record {
  Dtype dtype = Dtype::F64;
  std::vector<int64_t> extents;
  std::vector<uint8_t> bytes;  // raw little-endian payload

  int64_t count() const;
};

class Container {
 public:
  static constexpr uint32_t kVersion = 1;

  void put_tensor(const std::string& name, const Tensor& t, Dtype dtype = Dtype::F64);
  void put_doubles(const std::string& name, const std::vector<double>& v);
  void put_i64(const std::string& name, int64_t v);
  void put_u64(const std::string& name, uint64_t v);
  void put_bytes(const std::string& name, const std::vector<uint8_t>& v);
  void put_string(const std::string& name, const std::string& s);

  bool has(const std::string& name) const { return records_.count(name) > 0; }
  Tensor get_tensor(const std::string& name) const;
  std::vector<double> get_doubles(const std::string& name) const;
  int64_t get_i64(const std::string& name) const;
  uint64_t get_u64(const std::string& name) const;
  const std::vector<uint8_t>& get_bytes(const std::string& name) const;
  std::string get_string(const std::string& name) const;

  const std::map<std::string, Record>& records() const { return records_; }

  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  const Record& fetch(const std::string& name) const;
  std::map<std::string, Record> records_;
};

}  // namespace jdiff
