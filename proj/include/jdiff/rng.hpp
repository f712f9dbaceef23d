#pragma once

#include <cstdint>
#include <vector>

namespace jdiff {

// Counter-based 64-bit generator. Output i depends only on (seed, stream, i),
// so identical call sequences reproduce bit-identically on any platform and
// the state serializes as a single counter.
class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) { rekey(); }

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller, consuming exactly two uniforms.
  double normal();

  // Uniform integer in [lo, hi] without modulo bias (Lemire reduction).
  int64_t uniform_int(int64_t lo, int64_t hi);

  void fill_normal(std::vector<double>& out);

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }
  void set_counter(uint64_t c) { counter_ = c; }

  // Independent substream derived from this generator's identity.
  Rng derive(uint64_t substream) const { return Rng(seed_, mix(stream_ ^ mix(substream + 1))); }

  static uint64_t mix(uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ULL;
    z ^= z >> 33;
    return z;
  }

 private:
  void rekey() { key_ = mix(seed_ ^ mix(stream_ + 0x632be59bd9b4e019ULL)); }

  uint64_t seed_;
  uint64_t stream_;
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace jdiff
