#pragma once

// Seeded randomness with stable stream splitting. All draws go through the
// helpers below (never std::*_distribution) so results are pinned across
// standard libraries, and per-rollout streams are derived by index so batch
// parallelism cannot change what gets sampled.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace gfn {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic substream seed for (seed, a, b), e.g. (master, step, rollout).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = seed;
  std::uint64_t h = detail::splitmix64(s);
  s ^= (a + 1) * 0xD6E8FEB86659FD93ull;
  h ^= detail::splitmix64(s);
  s ^= (b + 1) * 0xCA5A826395121157ull;
  h ^= detail::splitmix64(s);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform in [0, 1).
  double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Modulo bias is negligible for the small n
  /// used here (action counts, trajectory lengths).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rng: below(0)");
    return gen_() % n;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  double normal() {
    // Box-Muller; one value per call keeps the stream layout simple.
    double u1 = u01();
    while (u1 <= 0.0) u1 = u01();
    const double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Index sampled from unnormalized nonnegative weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("rng: categorical needs positive mass");
    double u = u01() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] > 0.0) last_positive = i;
      acc += weights[i];
      if (u < acc) return i;
    }
    return last_positive;  // guard against fp rounding at the upper edge
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gfn
