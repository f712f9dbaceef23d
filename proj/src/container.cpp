#include "jdiff/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace jdiff {

namespace {

constexpr char kMagic[4] = {'J', 'D', 'C', 'K'};

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::F64:
      return 8;
    case Dtype::F32:
      return 4;
    case Dtype::U8:
      return 1;
    case Dtype::I64:
      return 8;
  }
  throw std::runtime_error("unknown dtype tag");
}

template <typename T>
void write_le(std::ostream& os, T v) {
  // Host is little-endian; memcpy keeps this explicit and alias-safe.
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw std::runtime_error("container: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

int64_t Record::count() const {
  int64_t n = 1;
  for (int64_t e : extents) n *= e;
  return n;
}

void Container::put_tensor(const std::string& name, const Tensor& t, Dtype dtype) {
  Record r;
  r.dtype = dtype;
  for (int e : t.shape()) r.extents.push_back(e);
  if (dtype == Dtype::F64) {
    r.bytes.resize(t.values().size() * 8);
    std::memcpy(r.bytes.data(), t.values().data(), r.bytes.size());
  } else if (dtype == Dtype::F32) {
    r.bytes.resize(t.values().size() * 4);
    for (size_t i = 0; i < t.values().size(); ++i) {
      float f = static_cast<float>(t.values()[i]);
      std::memcpy(r.bytes.data() + i * 4, &f, 4);
    }
  } else {
    throw std::invalid_argument("put_tensor: unsupported dtype for tensor record");
  }
  records_[name] = std::move(r);
}

void Container::put_doubles(const std::string& name, const std::vector<double>& v) {
  Record r;
  r.dtype = Dtype::F64;
  r.extents = {static_cast<int64_t>(v.size())};
  r.bytes.resize(v.size() * 8);
  std::memcpy(r.bytes.data(), v.data(), r.bytes.size());
  records_[name] = std::move(r);
}

void Container::put_i64(const std::string& name, int64_t v) {
  Record r;
  r.dtype = Dtype::I64;
  r.extents = {1};
  r.bytes.resize(8);
  std::memcpy(r.bytes.data(), &v, 8);
  records_[name] = std::move(r);
}

void Container::put_u64(const std::string& name, uint64_t v) { put_i64(name, static_cast<int64_t>(v)); }

void Container::put_bytes(const std::string& name, const std::vector<uint8_t>& v) {
  Record r;
  r.dtype = Dtype::U8;
  r.extents = {static_cast<int64_t>(v.size())};
  r.bytes = v;
  records_[name] = std::move(r);
}

void Container::put_string(const std::string& name, const std::string& s) {
  put_bytes(name, std::vector<uint8_t>(s.begin(), s.end()));
}

const Record& Container::fetch(const std::string& name) const {
  auto it = records_.find(name);
  if (it == records_.end()) throw std::runtime_error("container: missing record '" + name + "'");
  return it->second;
}

Tensor Container::get_tensor(const std::string& name) const {
  const Record& r = fetch(name);
  Shape shape;
  for (int64_t e : r.extents) shape.push_back(static_cast<int>(e));
  std::vector<double> vals(static_cast<size_t>(r.count()));
  if (r.dtype == Dtype::F64) {
    std::memcpy(vals.data(), r.bytes.data(), r.bytes.size());
  } else if (r.dtype == Dtype::F32) {
    for (size_t i = 0; i < vals.size(); ++i) {
      float f;
      std::memcpy(&f, r.bytes.data() + i * 4, 4);
      vals[i] = f;
    }
  } else {
    throw std::runtime_error("container: record '" + name + "' is not a float tensor");
  }
  return Tensor::from_vector(std::move(shape), std::move(vals));
}

std::vector<double> Container::get_doubles(const std::string& name) const { return get_tensor(name).values(); }

int64_t Container::get_i64(const std::string& name) const {
  const Record& r = fetch(name);
  if (r.dtype != Dtype::I64 || r.bytes.size() != 8)
    throw std::runtime_error("container: record '" + name + "' is not an i64 scalar");
  int64_t v;
  std::memcpy(&v, r.bytes.data(), 8);
  return v;
}

uint64_t Container::get_u64(const std::string& name) const { return static_cast<uint64_t>(get_i64(name)); }

const std::vector<uint8_t>& Container::get_bytes(const std::string& name) const {
  const Record& r = fetch(name);
  if (r.dtype != Dtype::U8) throw std::runtime_error("container: record '" + name + "' is not a byte record");
  return r.bytes;
}

std::string Container::get_string(const std::string& name) const {
  const auto& b = get_bytes(name);
  return std::string(b.begin(), b.end());
}

void Container::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("container: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_le<uint32_t>(os, kVersion);
  for (const auto& [name, r] : records_) {
    write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint8_t>(os, static_cast<uint8_t>(r.dtype));
    write_le<uint8_t>(os, static_cast<uint8_t>(r.extents.size()));
    for (int64_t e : r.extents) write_le<uint64_t>(os, static_cast<uint64_t>(e));
    os.write(reinterpret_cast<const char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  }
  if (!os) throw std::runtime_error("container: write failed for '" + path + "'");
}

Container Container::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("container: '" + path + "' has wrong magic bytes");
  uint32_t version = read_le<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("container: '" + path + "' has unsupported version " + std::to_string(version));
  Container c;
  while (true) {
    uint32_t name_len;
    {
      char buf[4];
      is.read(buf, 4);
      if (is.eof()) break;
      if (!is) throw std::runtime_error("container: truncated record header in '" + path + "'");
      std::memcpy(&name_len, buf, 4);
    }
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Record r;
    r.dtype = static_cast<Dtype>(read_le<uint8_t>(is));
    uint8_t rank = read_le<uint8_t>(is);
    for (int i = 0; i < rank; ++i) r.extents.push_back(static_cast<int64_t>(read_le<uint64_t>(is)));
    size_t payload = static_cast<size_t>(r.count()) * dtype_size(r.dtype);
    r.bytes.resize(payload);
    is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(payload));
    if (!is) throw std::runtime_error("container: truncated payload for record '" + name + "' in '" + path + "'");
    c.records_[name] = std::move(r);
  }
  return c;
}

}  // namespace jdiff
