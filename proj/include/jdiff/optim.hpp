#pragma once

#include <map>
#include <string>
#include <vector>

#include "jdiff/container.hpp"
#include "jdiff/params.hpp"

namespace jdiff {

// Decoupled-weight-decay Adam with linear learning-rate warmup:
// effective lr = base_lr * min(1, (step+1)/warmup_steps).
struct OptimizerState {
  double lr = 2e-5;
  int warmup_steps = 500;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m;  // first moments, keyed by parameter
  std::map<std::string, std::vector<double>> v;  // second moments

  double effective_lr() const;

  void save_into(Container& c, const std::string& prefix) const;
  void load_from(const Container& c, const std::string& prefix);
};

// One AdamW update over all parameters, consuming their accumulated grads.
// Throws on non-finite gradients, naming the parameter.
void adamw_step(ParameterStore& params, OptimizerState& state);

}  // namespace jdiff
