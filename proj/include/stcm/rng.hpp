#pragma once

#include <array>
#include <cstdint>

#include "stcm/tensor.hpp"

namespace stcm {

/// xoshiro256** seeded through splitmix64.
///
/// Every draw is derived from integer arithmetic only, so a seed produces the same
/// sequence on every platform. Floating-point conversions use the top 53 bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for (seed, stream_id); used for per-config streams in grid search.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi). Throws ArgumentError unless lo < hi.
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), unbiased (rejection on the top range).
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal by Box-Muller (both halves used).
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Tensor of independent uniforms in [lo, hi); advances `rng`.
Tensor rng_uniform(Rng& rng, double lo, double hi, const Shape& shape);

Tensor rng_normal(Rng& rng, double mean, double stddev, const Shape& shape);

}  // namespace stcm
