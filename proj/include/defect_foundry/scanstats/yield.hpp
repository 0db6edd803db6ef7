#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/numfit/poisson.hpp"
#include "defect_foundry/scanstats/site.hpp"

namespace defect_foundry::scanstats {

inline constexpr double kNominalApertureNm = 65.0;
inline constexpr double kApertureToleranceNm = 10.0;

/// Mean implanted ions through a circular aperture: fluence [cm^-2] times area.
inline double ions_per_aperture(double fluence_per_cm2, double diameter_nm) {
  require(fluence_per_cm2 >= 0.0 && std::isfinite(fluence_per_cm2), "ions_per_aperture: fluence must be >= 0");
  require(diameter_nm > 0.0 && std::isfinite(diameter_nm), "ions_per_aperture: diameter must be positive");
  const double r_cm = 0.5 * diameter_nm * 1e-7;
  return fluence_per_cm2 * std::numbers::pi * r_cm * r_cm;
}

struct IonInterval {
  double low = 0.0;
  double mean = 0.0;
  double high = 0.0;
};

/// Ion count over the diameter range d +- tolerance.
inline IonInterval ions_per_aperture_interval(double fluence_per_cm2, double diameter_nm,
                                              double tolerance_nm = kApertureToleranceNm) {
  require(tolerance_nm >= 0.0 && tolerance_nm < diameter_nm, "ions_per_aperture: tolerance must be in [0, diameter)");
  return {ions_per_aperture(fluence_per_cm2, diameter_nm - tolerance_nm),
          ions_per_aperture(fluence_per_cm2, diameter_nm),
          ions_per_aperture(fluence_per_cm2, diameter_nm + tolerance_nm)};
}

/// Aperture radius and lateral straggle added in quadrature (nm).
inline double lateral_uncertainty_nm(double diameter_nm, double lateral_straggle_nm) {
  require(diameter_nm > 0.0 && lateral_straggle_nm >= 0.0, "lateral_uncertainty: invalid inputs");
  return std::hypot(0.5 * diameter_nm, lateral_straggle_nm);
}

struct YieldReport {
  std::size_t n_sites = 0;
  double lambda_hat = 0.0;
  double lambda_std_error = 0.0;
  double single_fraction = 0.0;  // #(n = 1) / n_sites
  double ions_per_aperture = 0.0;
  double conversion_yield = 0.0;

  // Same statistics restricted to sites holding at least one emitter.
  std::size_t n_nonzero = 0;
  double single_fraction_nonzero = 0.0;
  std::optional<numfit::PoissonFit> truncated;  // absent when the sample mean is <= 1

  // Model predictions at lambda_hat: P(1) and P(1 | n >= 1).
  double model_single = 0.0;
  double model_single_truncated = 0.0;
  std::vector<double> histogram;  // fraction of sites with n = 0, 1, 2, ...
};

inline YieldReport yield_report(std::span<const std::uint64_t> counts, double ions) {
  require(!counts.empty(), "yield_report: no sites");
  require(ions > 0.0 && std::isfinite(ions), "yield_report: ions per aperture must be positive");
  YieldReport rep;
  rep.n_sites = counts.size();
  rep.ions_per_aperture = ions;

  const auto fit = numfit::poisson_mle(counts);
  rep.lambda_hat = fit.lambda_hat;
  rep.lambda_std_error = fit.std_error;
  rep.conversion_yield = fit.lambda_hat / ions;

  std::vector<std::uint64_t> nonzero;
  std::size_t singles = 0;
  std::uint64_t top = 0;
  for (auto c : counts) {
    singles += c == 1;
    top = std::max(top, c);
    if (c > 0) nonzero.push_back(c);
  }
  rep.single_fraction = static_cast<double>(singles) / static_cast<double>(counts.size());
  rep.n_nonzero = nonzero.size();
  if (!nonzero.empty()) {
    rep.single_fraction_nonzero = static_cast<double>(singles) / static_cast<double>(nonzero.size());
    double sum = 0.0;
    for (auto c : nonzero) sum += static_cast<double>(c);
    if (sum / static_cast<double>(nonzero.size()) > 1.0) rep.truncated = numfit::ztp_mle(nonzero);
  }
  rep.histogram.assign(top + 1, 0.0);
  for (auto c : counts) rep.histogram[c] += 1.0 / static_cast<double>(counts.size());

  if (rep.lambda_hat > 0.0) {
    rep.model_single = numfit::poisson_pmf(1, rep.lambda_hat);
    rep.model_single_truncated = numfit::ztp_pmf(1, rep.lambda_hat);
  }
  return rep;
}

inline YieldReport yield_report(std::span<const SiteRecord> sites, double ions) {
  std::vector<std::uint64_t> counts;
  counts.reserve(sites.size());
  for (const auto& s : sites) {
    s.validate();
    counts.push_back(static_cast<std::uint64_t>(s.n_emitters));
  }
  return yield_report(std::span<const std::uint64_t>(counts), ions);
}

}  // namespace defect_foundry::scanstats
