// SPDX-License-Identifier: GPL-2.0-only
#pragma once

#include <array>
#include <cstdint>

namespace cv2x {

/**
 * Splittable random stream: xoshiro256** seeded from (master seed, stream id).
 *
 * Derivation: h = mix64(mix64(master_seed) ^ stream_id), then four successive
 * SplitMix64 outputs starting from h fill the xoshiro state. mix64 is the
 * SplitMix64 finalizer. Every draw below is implemented here rather than with
 * <random> distributions so that sequences are identical across standard
 * libraries and platforms.
 */
class RngStream {
public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer on [lo, hi], unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

  double exponential();
  double normal();
  /// Gamma(shape, scale), Marsaglia-Tsang for shape >= 1, boosted below 1.
  double gamma(double shape, double scale);

  const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
  std::array<std::uint64_t, 4> s_{};
};

RngStream derive_rng(std::uint64_t master_seed, std::uint64_t stream_id);

/// SplitMix64 finalizer; also used for config hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cv2x
