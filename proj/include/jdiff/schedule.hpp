#pragma once

#include <vector>

namespace jdiff {

// Beta sequence with precomputed alphas and cumulative products.
// Indexing is 1-based through the accessors: t in [1, T].
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;       // beta_t, index t-1
  std::vector<double> alphas;      // 1 - beta_t
  std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

  double beta(int t) const { return betas.at(t - 1); }
  double alpha(int t) const { return alphas.at(t - 1); }
  // alpha_bar(0) == 1 by convention (no noise added yet).
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(t - 1); }
};

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

// Schedule from explicit betas (tests use degenerate beta -> 0 limits).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

}  // namespace jdiff
