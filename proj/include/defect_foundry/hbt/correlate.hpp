#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/histogram.hpp"
#include "defect_foundry/core/parallel.hpp"
#include "defect_foundry/core/timetag.hpp"

namespace defect_foundry::hbt {

inline constexpr Picoseconds kDefaultBinPs = 1'000;
inline constexpr Picoseconds kDefaultWindowPs = 500'000;

/// Full cross-correlation: every pair (t0 in ch0, t1 in ch1) with delay
/// tau = t1 - t0 inside the window is counted. Values are normalized by
/// n0 * n1 * bin_width / duration so uncorrelated streams give 1.
///
/// Sliding window over the sorted tags, O(n0 * pairs-per-window). Start
/// tags are split into contiguous chunks processed in parallel and the
/// integer partial histograms are summed, so the result is deterministic.
inline CorrelationHistogram correlate(const TimeTagStream& ch0, const TimeTagStream& ch1,
                                      Picoseconds bin_width = kDefaultBinPs,
                                      Picoseconds window = kDefaultWindowPs) {
  require(ch0.duration() == ch1.duration(), "correlate: duration mismatch");
  require(bin_width > 0, "correlate: bin width must be positive");
  require(window >= bin_width, "correlate: window must be at least one bin");

  const auto half = static_cast<std::size_t>(window / bin_width);
  const std::size_t n_bins = 2 * half + 1;
  // |tau| < (half + 1/2) bin_width, compared in doubled units to stay integral.
  const Picoseconds edge2 = static_cast<Picoseconds>(2 * half + 1) * bin_width;

  const auto& a = ch0.tags();
  const auto& b = ch1.tags();
  const std::size_t n_chunks = std::max<std::size_t>(1, std::min<std::size_t>(thread_budget() * 4, a.size() / 4096 + 1));
  std::vector<std::vector<std::uint64_t>> partial(n_chunks, std::vector<std::uint64_t>(n_bins, 0));

  parallel_for(n_chunks, [&](std::size_t chunk) {
    const std::size_t begin = a.size() * chunk / n_chunks;
    const std::size_t end = a.size() * (chunk + 1) / n_chunks;
    if (begin == end) return;
    auto& hist = partial[chunk];
    auto lo_it = std::lower_bound(b.begin(), b.end(), a[begin].t - edge2 / 2 - 1,
                                  [](const TimeTag& tag, Picoseconds t) { return tag.t < t; });
    std::size_t lo = static_cast<std::size_t>(lo_it - b.begin());
    for (std::size_t i = begin; i < end; ++i) {
      const Picoseconds t0 = a[i].t;
      while (lo < b.size() && 2 * (t0 - b[lo].t) >= edge2) ++lo;
      for (std::size_t j = lo; j < b.size(); ++j) {
        const Picoseconds tau = b[j].t - t0;
        if (2 * tau >= edge2) break;
        const Picoseconds mag2 = 2 * (tau < 0 ? -tau : tau);
        const auto k = static_cast<std::size_t>((mag2 + bin_width) / (2 * bin_width));
        const std::size_t idx = tau < 0 ? half - k : half + k;
        ++hist[idx];
      }
    }
  });

  CorrelationHistogram h;
  h.bin_width = bin_width;
  h.window = window;
  h.raw_pairs.assign(n_bins, 0);
  for (const auto& part : partial) {
    for (std::size_t k = 0; k < n_bins; ++k) h.raw_pairs[k] += part[k];
  }
  const double n0 = static_cast<double>(a.size());
  const double n1 = static_cast<double>(b.size());
  h.norm_factor = n0 * n1 * static_cast<double>(bin_width) / static_cast<double>(ch0.duration());
  if (!(h.norm_factor > 0.0)) h.norm_factor = 1.0;  // empty input: values stay 0
  h.values.resize(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) h.values[k] = static_cast<double>(h.raw_pairs[k]) / h.norm_factor;
  return h;
}

/// g2 = (N - (1 - rho^2)) / rho^2 applied bin by bin.
inline CorrelationHistogram background_correct(const CorrelationHistogram& h, double rho) {
  require(rho > 0.0 && rho <= 1.0, "background_correct: rho must lie in (0, 1]");
  CorrelationHistogram out = h;
  const double r2 = rho * rho;
  for (double& v : out.values) v = (v - (1.0 - r2)) / r2;
  return out;
}

/// Inverse of background_correct: N = rho^2 g2 + 1 - rho^2.
inline CorrelationHistogram background_uncorrect(const CorrelationHistogram& h, double rho) {
  require(rho > 0.0 && rho <= 1.0, "background_uncorrect: rho must lie in (0, 1]");
  CorrelationHistogram out = h;
  const double r2 = rho * rho;
  for (double& v : out.values) v = r2 * v + (1.0 - r2);
  return out;
}

/// Signal fraction s / (s + b) from total and background count rates.
inline double signal_fraction(double total_cps, double background_cps) {
  require(total_cps > 0.0, "signal_fraction: total rate must be positive");
  require(background_cps >= 0.0 && background_cps < total_cps, "signal_fraction: need 0 <= background < total");
  return (total_cps - background_cps) / total_cps;
}

}  // namespace defect_foundry::hbt
