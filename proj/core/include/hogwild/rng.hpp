#pragma once

#include <cstdint>

#include "hogwild/errors.hpp"

namespace hogwild {

// SplitMix64 generator. <random> distributions are implementation-defined,
// which would break bit-identical datasets and traces across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], both ends inclusive. Unbiased via mask rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw UsageError("uniform_int: lo > hi");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo);
    if (range == 0) return lo;
    std::uint64_t mask = range;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t draw;
    do {
      draw = next_u64() & mask;
    } while (draw > range);
    return lo + static_cast<std::int64_t>(draw);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; children with distinct keys never collide in practice.
  Rng fork(std::uint64_t key) {
    Rng mix(state_ ^ (0x632be59bd9b4e019ull * (key + 1)));
    return Rng(mix.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace hogwild
