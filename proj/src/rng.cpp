#include "jdiff/rng.hpp"

#include <cmath>

namespace jdiff {

double Rng::normal() {
  // u1 in (0, 1] keeps log finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
  uint64_t x = next_u64();
  auto wide = static_cast<unsigned __int128>(x) * range;
  return lo + static_cast<int64_t>(wide >> 64);
}

void Rng::fill_normal(std::vector<double>& out) {
  for (double& v : out) v = normal();
}

}  // namespace jdiff
