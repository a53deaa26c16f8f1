#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ift/common.hpp"

namespace ift {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// streams do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  index_t uniform_int(index_t n) {
    require(n > 0, "uniform_int: n must be positive");
    return static_cast<index_t>(uniform() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool coin() { return (eng_() & 1u) != 0; }

  // Independent substream for a named component.
  Rng fork(std::uint64_t tag) {
    std::uint64_t s = eng_() ^ (tag * 0x9e3779b97f4a7c15ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ift
