#pragma once

#include <cstddef>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/rng.hpp"

namespace defect_foundry::emitter {

/// Binned counts of a constant-rate Poisson source.
inline std::vector<double> poisson_trace(double rate_cps, double bin_ms, std::size_t n_bins, RngSpec spec) {
  require(rate_cps >= 0.0 && bin_ms > 0.0, "poisson_trace: invalid rate or bin");
  Rng rng(spec);
  std::vector<double> out(n_bins);
  const double mean = rate_cps * bin_ms * 1e-3;
  for (double& v : out) v = static_cast<double>(rng.poisson(mean));
  return out;
}

/// Two-state blinking source: alternates between rate_low and rate_high
/// every switch_s seconds (starting low), Poisson counts per bin.
inline std::vector<double> telegraph_trace(double rate_low_cps, double rate_high_cps, double switch_s,
                                           double bin_ms, std::size_t n_bins, RngSpec spec) {
  require(rate_low_cps >= 0.0 && rate_high_cps >= 0.0, "telegraph_trace: rates must be non-negative");
  require(switch_s > 0.0 && bin_ms > 0.0, "telegraph_trace: invalid switch period or bin");
  Rng rng(spec);
  std::vector<double> out(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const double t_s = (static_cast<double>(i) + 0.5) * bin_ms * 1e-3;
    const bool high = static_cast<long long>(t_s / switch_s) % 2 == 1;
    out[i] = static_cast<double>(rng.poisson((high ? rate_high_cps : rate_low_cps) * bin_ms * 1e-3));
  }
  return out;
}

}  // namespace defect_foundry::emitter
