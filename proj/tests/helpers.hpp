#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "jdiff/rng.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff::testing {

// Central finite differences against the reverse pass. `loss` must rebuild
// the graph from the current values of `inputs` on every call. Checks the
// elements listed in `probe` per input (empty = all) and returns the maximum
// relative error with an absolute guard for near-zero gradients.
inline double max_rel_grad_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                 const std::vector<std::vector<int64_t>>& probe = {}, double h = 1e-5,
                                 double guard = 1e-8) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor l = loss();
  l.backward();
  std::vector<std::vector<double>> grads;
  for (Tensor& t : inputs) grads.push_back(t.grad());

  double worst = 0.0;
  for (size_t pi = 0; pi < inputs.size(); ++pi) {
    Tensor& t = inputs[pi];
    std::vector<int64_t> idx;
    if (pi < probe.size() && !probe[pi].empty()) {
      idx = probe[pi];
    } else {
      idx.resize(t.size());
      for (int64_t i = 0; i < t.size(); ++i) idx[i] = i;
    }
    for (int64_t i : idx) {
      double saved = t.values()[i];
      double lp, lm;
      {
        NoGradGuard ng;
        t.values()[i] = saved + h;
        lp = loss().value();
        t.values()[i] = saved - h;
        lm = loss().value();
        t.values()[i] = saved;
      }
      double numeric = (lp - lm) / (2.0 * h);
      double analytic = grads[pi][i];
      double denom = std::max({guard, std::abs(numeric), std::abs(analytic)});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

// Fresh scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  std::string d = (std::filesystem::temp_directory_path() / ("jdiff_test_" + tag)).string();
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace jdiff::testing
