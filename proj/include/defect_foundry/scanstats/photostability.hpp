#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry::scanstats {

/// Blinking test thresholds: a two-state Gaussian mixture must beat a single
/// Gaussian by this much BIC and its means must differ by this many
/// sqrt(mean count).
inline constexpr double kBlinkingDeltaBic = 10.0;
inline constexpr double kBlinkingSeparation = 5.0;

struct StabilityReport {
  std::size_t n_bins = 0;
  double mean_counts = 0.0;
  double mean_rate_cps = 0.0;
  double fano = 0.0;
  double delta_bic = 0.0;  // BIC(one component) - BIC(two components)
  double mean_low = 0.0;   // mixture component means (counts per bin)
  double mean_high = 0.0;
  double weight_high = 0.0;
  bool blinking = false;
};

namespace detail {

struct Mixture {
  double w = 0.5;
  double m1 = 0.0, v1 = 1.0;
  double m2 = 0.0, v2 = 1.0;
  double loglik = 0.0;
};

inline double log_normal_pdf(double x, double m, double v) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * v) + (x - m) * (x - m) / v);
}

// EM for a two-component 1D Gaussian mixture, started from the quartiles.
inline Mixture fit_mixture(const std::vector<double>& xs, double var_floor) {
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = xs.size();
  Mixture mix;
  mix.m1 = sorted[n / 4];
  mix.m2 = sorted[(3 * n) / 4];
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var = std::max(var / static_cast<double>(n), var_floor);
  mix.v1 = mix.v2 = var;
  if (mix.m1 == mix.m2) mix.m2 = mix.m1 + std::sqrt(var);

  std::vector<double> resp(n);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < 1000; ++it) {
    double ll = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = std::log1p(-mix.w) + log_normal_pdf(xs[k], mix.m1, mix.v1);
      const double b = std::log(mix.w) + log_normal_pdf(xs[k], mix.m2, mix.v2);
      const double top = std::max(a, b);
      const double lse = top + std::log(std::exp(a - top) + std::exp(b - top));
      resp[k] = std::exp(b - lse);
      ll += lse;
    }
    mix.loglik = ll;
    if (ll - prev < 1e-10 * std::fabs(ll)) break;
    prev = ll;
    double r2 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      r2 += resp[k];
      s1 += (1.0 - resp[k]) * xs[k];
      s2 += resp[k] * xs[k];
    }
    const double r1 = static_cast<double>(n) - r2;
    if (r1 < 1e-9 || r2 < 1e-9) break;  // collapsed onto one component
    mix.w = r2 / static_cast<double>(n);
    mix.m1 = s1 / r1;
    mix.m2 = s2 / r2;
    double q1 = 0.0, q2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      q1 += (1.0 - resp[k]) * (xs[k] - mix.m1) * (xs[k] - mix.m1);
      q2 += resp[k] * (xs[k] - mix.m2) * (xs[k] - mix.m2);
    }
    mix.v1 = std::max(q1 / r1, var_floor);
    mix.v2 = std::max(q2 / r2, var_floor);
  }
  if (mix.m1 > mix.m2) {
    std::swap(mix.m1, mix.m2);
    std::swap(mix.v1, mix.v2);
    mix.w = 1.0 - mix.w;
  }
  return mix;
}

}  // namespace detail

/// Fano factor and a blinking test on a binned count trace.
inline StabilityReport photostability(std::span<const double> counts, double bin_ms) {
  require(counts.size() >= 100, "photostability: need at least 100 bins");
  require(bin_ms > 0.0, "photostability: bin width must be positive");
  std::vector<double> xs(counts.begin(), counts.end());
  for (double x : xs) require(x >= 0.0 && std::isfinite(x), "photostability: counts must be non-negative");

  StabilityReport rep;
  rep.n_bins = xs.size();
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n - 1.0;
  rep.mean_counts = mean;
  rep.mean_rate_cps = mean / (bin_ms * 1e-3);
  rep.fano = mean > 0.0 ? var / mean : 0.0;

  // Integer counts: floor variances at the quantization variance.
  const double var_floor = 1.0 / 12.0;
  const double var_ml = std::max(var * (n - 1.0) / n, var_floor);
  double ll1 = 0.0;
  for (double x : xs) ll1 += detail::log_normal_pdf(x, mean, var_ml);
  const auto mix = detail::fit_mixture(xs, var_floor);
  const double bic1 = -2.0 * ll1 + 2.0 * std::log(n);
  const double bic2 = -2.0 * mix.loglik + 5.0 * std::log(n);
  rep.delta_bic = bic1 - bic2;
  rep.mean_low = mix.m1;
  rep.mean_high = mix.m2;
  rep.weight_high = mix.w;
  rep.blinking = rep.delta_bic > kBlinkingDeltaBic &&
                 (mix.m2 - mix.m1) > kBlinkingSeparation * std::sqrt(std::max(mean, 0.0));
  return rep;
}

}  // namespace defect_foundry::scanstats
