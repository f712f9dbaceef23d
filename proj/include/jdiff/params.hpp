#pragma once

#include <map>
#include <string>

#include "jdiff/container.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff {

// Named trainable parameters with deterministic (lexicographic) iteration.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t size() const { return params_.size(); }

  int64_t parameter_count() const;
  void zero_grad();

  // Records named "<prefix><name>"; 64-bit round trip is bit-exact.
  void save_into(Container& c, const std::string& prefix, Dtype dtype = Dtype::F64) const;
  void load_from(const Container& c, const std::string& prefix);

 private:
  std::map<std::string, Tensor> params_;
};

}  // namespace jdiff
