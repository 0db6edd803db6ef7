#pragma once

#include <cstdint>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/timetag.hpp"

namespace defect_foundry {

/// Normalized coincidence histogram N(tau).
///
/// Bin k (k = -half..half, stored at index k + half) collects delays with
/// (|k| - 1/2) * bin_width <= |tau| < (|k| + 1/2) * bin_width on the side
/// given by sign(tau); the zero bin is the open interval (-w/2, w/2). This
/// rounding is symmetric under tau -> -tau.
struct CorrelationHistogram {
  Picoseconds bin_width = 1;
  Picoseconds window = 0;
  std::vector<double> values;
  std::vector<std::uint64_t> raw_pairs;
  double norm_factor = 1.0;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] std::size_t half_bins() const { return values.size() / 2; }
  [[nodiscard]] std::size_t center_index() const { return half_bins(); }

  [[nodiscard]] Picoseconds tau_ps(std::size_t index) const {
    return (static_cast<Picoseconds>(index) - static_cast<Picoseconds>(half_bins())) * bin_width;
  }
  [[nodiscard]] double tau_ns(std::size_t index) const {
    return static_cast<double>(tau_ps(index)) / static_cast<double>(kPsPerNs);
  }

  void validate() const {
    require(bin_width > 0, "histogram bin width must be positive");
    require(values.size() % 2 == 1, "histogram must have an odd number of bins");
    require(raw_pairs.size() == values.size(), "histogram raw/normalized size mismatch");
    require(norm_factor > 0.0, "histogram norm factor must be positive");
  }
};

}  // namespace defect_foundry
