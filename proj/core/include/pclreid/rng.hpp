#pragma once

#include <array>
#include <cstdint>

namespace pclreid {

/// Raw 256-bit generator state; serialized verbatim (little-endian words) in checkpoints.
using RngState = std::array<std::uint64_t, 4>;

/// xoshiro256** seeded through SplitMix64.
///
/// Every derived distribution (uniform reals, bounded integers, normals) is
/// implemented here on top of the raw 64-bit stream instead of using
/// <random> distributions, whose output is implementation-defined. The same
/// seed therefore yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Generator for an independent sub-stream, e.g. one per class during data generation.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [-bound, bound).
  double uniform_symmetric(double bound);
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via the Marsaglia polar method (one value per call).
  double normal();

  const RngState& state() const noexcept { return state_; }
  void set_state(const RngState& state) noexcept { state_ = state; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  RngState state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace pclreid
