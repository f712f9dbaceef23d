#include "jdiff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jdiff {

double OptimizerState::effective_lr() const {
  double warm = warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / warmup_steps) : 1.0;
  return lr * warm;
}

void adamw_step(ParameterStore& params, OptimizerState& state) {
  double elr = state.effective_lr();
  int64_t t = state.step + 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    std::vector<double>& g = p.grad();
    for (double gv : g)
      if (!std::isfinite(gv)) throw std::runtime_error("adamw_step: non-finite gradient in parameter '" + name + "'");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size() || v.size() != g.size())
      throw std::runtime_error("adamw_step: moment buffers for '" + name + "' do not match parameter shape");
    std::vector<double>& pv = p.values();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      pv[i] -= elr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * pv[i]);
    }
  }
  state.step = t;
}

void OptimizerState::save_into(Container& c, const std::string& prefix) const {
  c.put_i64(prefix + "step", step);
  c.put_doubles(prefix + "hyper", {lr, static_cast<double>(warmup_steps), weight_decay, beta1, beta2, eps});
  for (const auto& [name, buf] : m) c.put_doubles(prefix + "m/" + name, buf);
  for (const auto& [name, buf] : v) c.put_doubles(prefix + "v/" + name, buf);
}

void OptimizerState::load_from(const Container& c, const std::string& prefix) {
  step = c.get_i64(prefix + "step");
  std::vector<double> h = c.get_doubles(prefix + "hyper");
  lr = h[0];
  warmup_steps = static_cast<int>(h[1]);
  weight_decay = h[2];
  beta1 = h[3];
  beta2 = h[4];
  eps = h[5];
  m.clear();
  v.clear();
  std::string mp = prefix + "m/", vp = prefix + "v/";
  for (const auto& [name, rec] : c.records()) {
    if (name.rfind(mp, 0) == 0) m[name.substr(mp.size())] = c.get_doubles(name);
    if (name.rfind(vp, 0) == 0) v[name.substr(vp.size())] = c.get_doubles(name);
  }
}

}  // namespace jdiff
