#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hdet {

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 is fully specified by the standard; the std::*_distribution
/// adaptors are not, so the few distributions we need are derived here from
/// raw engine output. That keeps datasets and training runs bit-reproducible
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Independent stream for (seed, index), e.g. one per generated image.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed) ^ mix(index + 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal (Box-Muller, one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates with our own index draws.
  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hdet
