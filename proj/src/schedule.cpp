#include "jdiff/schedule.hpp"

#include <stdexcept>
#include <string>

namespace jdiff {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule: need at least one step");
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  s.betas = std::move(betas);
  s.alphas.reserve(s.T);
  s.alpha_bars.reserve(s.T);
  double prod = 1.0;
  for (double b : s.betas) {
    if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta out of [0,1): " + std::to_string(b));
    double a = 1.0 - b;
    prod *= a;
    s.alphas.push_back(a);
    s.alpha_bars.push_back(prod);
  }
  return s;
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1, got [" +
                                std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
  std::vector<double> betas(T);
  for (int t = 0; t < T; ++t)
    betas[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
  return schedule_from_betas(std::move(betas));
}

}  // namespace jdiff
