// rng.hpp -- counter-based random number generation (splitmix64 stream).
//
// Every sampler in the toolkit takes an explicit 64-bit seed; the generator is
// a pure function of (seed, counter), so identical seeds reproduce identical
// streams on any platform. Replicate r of a batch uses seed + r.
#pragma once

#include <cmath>
#include <cstdint>

#include "lgcp/common.hpp"

namespace lgcp {

// splitmix64 output function (Steele, Lea, Flood; the java.util.SplittableRandom mixer).
inline std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + (counter + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return splitmix64_at(seed_, counter_++); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller (consumes two uniforms, no cached state).
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Poisson by inversion (product of uniforms); large means are split into
  // chunks small enough that exp(-chunk) stays well above underflow.
  long poisson(double mean) {
    if (mean < 0.0) throw ParameterError("poisson: negative mean");
    if (mean == 0.0) return 0;
    long total = 0;
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    return total + poisson_small(mean);
  }

 private:
  long poisson_small(double mean) {
    const double limit = std::exp(-mean);
    double prod = uniform();
    long k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }

  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace lgcp
