#pragma once

// Deterministic random numbers.
//
// The raw generator is Philox4x32-10 (Salmon et al., "Parallel random numbers:
// as easy as 1, 2, 3", SC'11) with the Random123 round constants. The 64-bit
// seed is the key; the 128-bit counter holds a 64-bit block index and the
// 64-bit stream id, so every (seed, stream_id) pair owns an independent,
// addressable sequence. Raw 32/64-bit output is bit-identical everywhere.
//
// Every continuous/discrete variate below is implemented here rather than
// through <random> distributions, whose algorithms are implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry {

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Derive a child substream; distinct `k` give unrelated streams.
  [[nodiscard]] RngSpec child(std::uint64_t k) const {
    return {seed, mix(stream_id ^ mix(k + 0x9E3779B97F4A7C15ULL))};
  }

  friend bool operator==(const RngSpec&, const RngSpec&) = default;

  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// One Philox4x32-10 block.
constexpr PhiloxBlock philox4x32_10(PhiloxBlock ctr, PhiloxKey key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

class Rng {
 public:
  explicit Rng(RngSpec spec) : spec_(spec) {}

  [[nodiscard]] const RngSpec& spec() const { return spec_; }

  std::uint32_t next_u32() {
    if (lane_ == 4) refill();
    return buffer_[lane_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double rate) {
    require(rate > 0.0, "exponential rate must be positive");
    return -std::log(uniform()) / rate;
  }

  /// Standard normal via Box-Muller (one output per call).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Gamma(shape, scale) by Marsaglia-Tsang; shape < 1 uses the u^(1/a) boost.
  double gamma(double shape, double scale = 1.0) {
    require(shape >= 0.0 && scale > 0.0, "gamma requires shape >= 0, scale > 0");
    if (shape == 0.0) return 0.0;
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0, 1.0);
      return scale * g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  /// Poisson(mean): multiplication method below 10, Hormann's PTRS above.
  std::uint64_t poisson(double mean) {
    require(mean >= 0.0 && std::isfinite(mean), "poisson mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean < 10.0) {
      const double limit = std::exp(-mean);
      std::uint64_t k = 0;
      double prod = uniform();
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::fabs(u);
      const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          -mean + k * loglam - std::lgamma(k + 1.0)) {
        return static_cast<std::uint64_t>(k);
      }
    }
  }

  /// Number of Bernoulli(p) trials up to and including the first success.
  std::uint64_t geometric(double p) {
    require(p > 0.0 && p <= 1.0, "geometric p must lie in (0, 1]");
    if (p == 1.0) return 1;
    return 1 + static_cast<std::uint64_t>(std::floor(std::log(uniform()) / std::log1p(-p)));
  }

  /// Failures before the r-th success of Bernoulli(p), as a Poisson-gamma mixture.
  std::uint64_t negative_binomial(std::uint64_t r, double p) {
    require(p > 0.0 && p <= 1.0, "negative_binomial p must lie in (0, 1]");
    if (r == 0 || p == 1.0) return 0;
    return poisson(gamma(static_cast<double>(r), (1.0 - p) / p));
  }

 private:
  void refill() {
    const PhiloxBlock ctr{static_cast<std::uint32_t>(block_),
                          static_cast<std::uint32_t>(block_ >> 32),
                          static_cast<std::uint32_t>(spec_.stream_id),
                          static_cast<std::uint32_t>(spec_.stream_id >> 32)};
    const PhiloxKey key{static_cast<std::uint32_t>(spec_.seed),
                        static_cast<std::uint32_t>(spec_.seed >> 32)};
    buffer_ = philox4x32_10(ctr, key);
    ++block_;
    lane_ = 0;
  }

  RngSpec spec_;
  std::uint64_t block_ = 0;
  PhiloxBlock buffer_{};
  int lane_ = 4;
};

}  // namespace defect_foundry
