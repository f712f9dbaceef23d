#include "jdiff/params.hpp"

#include <stdexcept>

namespace jdiff {

Tensor& ParameterStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  it->second.set_requires_grad(true);
  return it->second;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return it->second;
}

int64_t ParameterStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParameterStore::save_into(Container& c, const std::string& prefix, Dtype dtype) const {
  for (const auto& [name, t] : params_) c.put_tensor(prefix + name, t, dtype);
}

void ParameterStore::load_from(const Container& c, const std::string& prefix) {
  for (auto& [name, t] : params_) {
    Tensor loaded = c.get_tensor(prefix + name);
    if (loaded.shape() != t.shape())
      throw std::runtime_error("ParameterStore: checkpoint shape " + shape_str(loaded.shape()) +
                               " does not match parameter '" + name + "' " + shape_str(t.shape()));
    t.values() = loaded.values();
    t.zero_grad();
  }
}

}  // namespace jdiff
