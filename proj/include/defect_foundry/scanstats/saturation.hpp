#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/fit_result.hpp"
#include "defect_foundry/numfit/models.hpp"
#include "defect_foundry/numfit/nlls.hpp"

namespace defect_foundry::scanstats {

struct SaturationPoint {
  double power_mw = 0.0;
  double rate_cps = 0.0;
};

struct SaturationFit {
  double I_s = 0.0;  // cps
  double P0 = 0.0;   // mW
  FitResult fit;

  [[nodiscard]] double rate_at(double power_mw) const { return I_s / (1.0 + P0 / power_mw); }
};

enum class SaturationWeighting {
  none,      // every point weighted equally
  relative,  // sigma proportional to the fitted rate (multiplicative noise), iterated
};

/// n powers spaced evenly in log between lo and hi (inclusive).
inline std::vector<double> log_spaced_powers(double lo_mw, double hi_mw, std::size_t n) {
  require(lo_mw > 0.0 && hi_mw > lo_mw && n >= 2, "log_spaced_powers: need 0 < lo < hi and n >= 2");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = lo_mw * std::pow(hi_mw / lo_mw, static_cast<double>(k) / static_cast<double>(n - 1));
  }
  out.back() = hi_mw;
  return out;
}

/// Fits I(P) = I_s / (1 + P0 / P). Points are sorted by power first, so the
/// result does not depend on input order.
inline SaturationFit fit_saturation(std::span<const SaturationPoint> points,
                                    SaturationWeighting weighting = SaturationWeighting::none) {
  std::vector<SaturationPoint> pts(points.begin(), points.end());
  for (const auto& p : pts) {
    require(p.power_mw > 0.0 && std::isfinite(p.power_mw), "fit_saturation: powers must be positive");
    require(std::isfinite(p.rate_cps), "fit_saturation: rates must be finite");
  }
  std::sort(pts.begin(), pts.end(), [](const SaturationPoint& a, const SaturationPoint& b) {
    return a.power_mw < b.power_mw || (a.power_mw == b.power_mw && a.rate_cps < b.rate_cps);
  });
  std::size_t distinct = pts.empty() ? 0 : 1;
  for (std::size_t k = 1; k < pts.size(); ++k) distinct += pts[k].power_mw != pts[k - 1].power_mw;
  require(distinct >= 3, "fit_saturation: need at least 3 distinct powers");

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& p : pts) {
    xs.push_back(p.power_mw);
    ys.push_back(p.rate_cps);
  }
  const double i_max = *std::max_element(ys.begin(), ys.end());
  require(i_max > 0.0, "fit_saturation: all rates are non-positive");
  std::vector<double> sorted_p = xs;
  const double p_med = sorted_p.size() % 2 ? sorted_p[sorted_p.size() / 2]
                                           : 0.5 * (sorted_p[sorted_p.size() / 2 - 1] + sorted_p[sorted_p.size() / 2]);

  const auto model = numfit::saturation_model();
  std::vector<double> p0{1.1 * i_max, p_med};
  FitResult r = numfit::fit_nlls(model, p0, xs, ys);
  if (weighting == SaturationWeighting::relative) {
    for (int pass = 0; pass < 5 && r.params[0] > 0.0; ++pass) {
      std::vector<double> sig(xs.size());
      for (std::size_t k = 0; k < xs.size(); ++k) sig[k] = std::max(model.eval(r.params, xs[k]), 1e-12 * i_max);
      FitResult next = numfit::fit_nlls(model, r.params, xs, ys, sig);
      const bool settled = std::fabs(next.params[1] - r.params[1]) <= 1e-10 * r.params[1];
      r = std::move(next);
      if (settled) break;
    }
  }
  SaturationFit out;
  out.I_s = r.params[0];
  out.P0 = r.params[1];
  out.fit = std::move(r);
  return out;
}

}  // namespace defect_foundry::scanstats
