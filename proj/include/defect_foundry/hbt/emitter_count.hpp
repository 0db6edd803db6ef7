#pragma once

#include <cmath>
#include <optional>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry::hbt {

/// Above this g2(0) the antibunching dip no longer separates n = 3 from n = 4
/// (1 - 1/3 = 0.667, 1 - 1/4 = 0.75); the intensity ratio decides instead.
inline constexpr double kG2RuleThreshold = 0.75;
/// Sites dimmer than this fraction of a single emitter count as empty.
inline constexpr double kEmptySiteFraction = 0.5;

/// Emitter number from zero-delay antibunching and brightness relative to a
/// known single emitter. Only the ratio site / single_ref enters.
inline int estimate_emitter_count(std::optional<double> measured_g2_zero, double site_intensity,
                                  double single_ref_intensity) {
  require(single_ref_intensity > 0.0, "estimate_emitter_count: single reference intensity must be positive");
  require(site_intensity >= 0.0, "estimate_emitter_count: site intensity must be non-negative");
  const double ratio = site_intensity / single_ref_intensity;
  if (ratio < kEmptySiteFraction) return 0;
  const int n_intensity = std::max(1, static_cast<int>(std::lround(ratio)));
  if (!measured_g2_zero || !(*measured_g2_zero < 1.0) || *measured_g2_zero > kG2RuleThreshold) {
    return n_intensity;
  }
  const int n_g2 = std::max(1, static_cast<int>(std::lround(1.0 / (1.0 - *measured_g2_zero))));
  return n_g2 <= 2 ? n_g2 : n_intensity;
}

}  // namespace defect_foundry::hbt
