#pragma once

#include <array>
#include <cstdint>

namespace mtlsar {

/// xoshiro256** seeded through splitmix64.
///
/// Gaussian draws use the Box-Muller transform; the second value
/// of each pair is cached and returned by the next call, so the stream
/// depends only on the seed and the sequence of calls.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi] (inclusive), unbiased via rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double gaussian(double mean = 0.0, double stddev = 1.0);

  /// Gamma(shape, scale) via Marsaglia-Tsang.
  double gamma(double shape, double scale);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Seed for an independent sub-stream, e.g. one per generated chip.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t index);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mtlsar
