#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/fit_result.hpp"
#include "defect_foundry/core/parallel.hpp"
#include "defect_foundry/core/rng.hpp"
#include "defect_foundry/numfit/models.hpp"
#include "defect_foundry/numfit/nlls.hpp"
#include "defect_foundry/odmr/spin.hpp"

namespace defect_foundry::odmr {

struct SweepGrid {
  double f_lo_mhz = 40.0;
  double f_hi_mhz = 100.0;
  std::size_t n_points = 61;

  [[nodiscard]] std::vector<double> frequencies() const {
    std::vector<double> f(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
      f[k] = f_lo_mhz + (f_hi_mhz - f_lo_mhz) * static_cast<double>(k) / static_cast<double>(n_points - 1);
    }
    return f;
  }
};

struct LineShape {
  double width_mhz = 8.0;  // full width at half maximum
  double peak_contrast = 0.01;
};

struct GateProtocol {
  double gate_ms = 2.8;
  std::uint64_t repetitions = 20000;
  std::uint64_t scans = 6;
};

struct OdmrSweep {
  std::vector<double> freqs_mhz;
  std::vector<double> contrast;
  std::vector<double> counts_on;
  std::vector<double> counts_off;
  std::vector<bool> valid;  // false where no on-counts were recorded
  GateProtocol protocol;

  void validate() const {
    const std::size_t n = freqs_mhz.size();
    require(contrast.size() == n && counts_on.size() == n && counts_off.size() == n,
            "odmr sweep: arrays differ in length");
    for (std::size_t k = 0; k < n; ++k) {
      require(counts_on[k] >= 0.0 && counts_off[k] >= 0.0, "odmr sweep: counts must be non-negative");
    }
  }
};

/// (sum off - sum on) / sum on per point; points without on-counts are
/// flagged invalid and given contrast 0.
inline std::vector<double> odmr_contrast(std::span<const double> on, std::span<const double> off,
                                         std::vector<bool>* valid = nullptr) {
  require(on.size() == off.size(), "odmr_contrast: on and off differ in length");
  std::vector<double> c(on.size(), 0.0);
  if (valid) valid->assign(on.size(), true);
  for (std::size_t k = 0; k < on.size(); ++k) {
    require(on[k] >= 0.0 && off[k] >= 0.0, "odmr_contrast: counts must be non-negative");
    if (on[k] > 0.0) {
      c[k] = (off[k] - on[k]) / on[k];
    } else if (valid) {
      (*valid)[k] = false;
    } else {
      throw InputError("odmr_contrast: zero on-counts at point " + std::to_string(k));
    }
  }
  return c;
}

/// Fractional PL drop at f: sum over transitions of a unit-height
/// Lorentzian times the peak contrast, capped at 1.
inline double pl_drop(double f, std::span<const double> resonances, const LineShape& line) {
  const double h = 0.5 * line.width_mhz;
  double drop = 0.0;
  for (double f0 : resonances) drop += line.peak_contrast * h * h / ((f - f0) * (f - f0) + h * h);
  return std::min(drop, 1.0);
}

/// Gated ODMR sweep. Every scan visits every point; each visit accumulates
/// `repetitions` microwave-on and -off gates. The Poisson sum over
/// repetitions is drawn as one Poisson variate per scan and point.
inline OdmrSweep simulate_odmr(const SpinSystem& sys, const SweepGrid& grid, const LineShape& line,
                               double rate_cps, const GateProtocol& protocol, RngSpec rng_spec) {
  require(grid.f_lo_mhz < grid.f_hi_mhz, "simulate_odmr: need f_lo < f_hi");
  require(grid.n_points >= 2, "simulate_odmr: need at least 2 points");
  require(line.width_mhz > 0.0, "simulate_odmr: line width must be positive");
  require(line.peak_contrast >= 0.0 && line.peak_contrast <= 1.0, "simulate_odmr: contrast must be in [0, 1]");
  require(rate_cps >= 0.0, "simulate_odmr: rate must be non-negative");
  require(protocol.gate_ms > 0.0 && protocol.repetitions > 0 && protocol.scans > 0,
          "simulate_odmr: protocol values must be positive");

  const auto resonances = transition_frequencies(sys);
  OdmrSweep out;
  out.protocol = protocol;
  out.freqs_mhz = grid.frequencies();
  const std::size_t n = out.freqs_mhz.size();
  out.counts_on.assign(n, 0.0);
  out.counts_off.assign(n, 0.0);
  const double per_visit = rate_cps * protocol.gate_ms * 1e-3 * static_cast<double>(protocol.repetitions);

  parallel_for(n, [&](std::size_t k) {
    Rng rng(rng_spec.child(k));
    const double mean_on = per_visit * (1.0 - pl_drop(out.freqs_mhz[k], resonances, line));
    std::uint64_t on = 0;
    std::uint64_t off = 0;
    for (std::uint64_t s = 0; s < protocol.scans; ++s) {
      on += rng.poisson(mean_on);
      off += rng.poisson(per_visit);
    }
    out.counts_on[k] = static_cast<double>(on);
    out.counts_off[k] = static_cast<double>(off);
  });
  out.contrast = odmr_contrast(out.counts_on, out.counts_off, &out.valid);
  return out;
}

struct OdmrFit {
  double center_mhz = 0.0;
  double width_mhz = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  bool detected = false;  // amplitude above 5 standard errors
  FitResult fit;
};

/// Lorentzian fit of the contrast spectrum. Starts at the contrast maximum
/// with width span/10 and offset median(contrast). The width is kept within
/// [grid step / 4, 2 span] so a noise spike can't collapse the line.
inline OdmrFit fit_odmr(const OdmrSweep& sweep) {
  sweep.validate();
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k = 0; k < sweep.freqs_mhz.size(); ++k) {
    if (!sweep.valid.empty() && !sweep.valid[k]) continue;
    xs.push_back(sweep.freqs_mhz[k]);
    ys.push_back(sweep.contrast[k]);
  }
  require(xs.size() >= 8, "fit_odmr: need at least 8 valid frequency points");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double span = *hi_it - *lo_it;
  require(span > 0.0, "fit_odmr: frequencies must span a range");

  std::vector<double> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double med = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  const auto peak = static_cast<std::size_t>(std::max_element(ys.begin(), ys.end()) - ys.begin());

  // Contrasts are ~1e-2; fit them in units of their spread so the solver's
  // absolute gradient tolerance means the same thing at every scale.
  double scale = 0.0;
  for (double y : ys) scale = std::max(scale, std::fabs(y - med));
  if (scale == 0.0) scale = 1.0;
  std::vector<double> yn(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) yn[k] = ys[k] / scale;

  auto model = numfit::lorentzian_model();
  const double step = span / static_cast<double>(xs.size() - 1);
  model.bounds[2] = {0.25 * step, 2.0 * span};
  std::vector<double> p0{std::max(ys[peak] - med, 0.0) / scale, xs[peak],
                         std::clamp(span / 10.0, 0.25 * step, 2.0 * span), med / scale};

  OdmrFit out;
  out.fit = numfit::fit_nlls(model, p0, xs, yn);
  const std::size_t m = out.fit.params.size();
  const double unit[4] = {scale, 1.0, 1.0, scale};
  for (std::size_t j = 0; j < m; ++j) {
    out.fit.params[j] *= unit[j];
    out.fit.std_errors[j] *= unit[j];
    for (std::size_t i = 0; i < m && !out.fit.covariance.empty(); ++i) out.fit.covariance[i * m + j] *= unit[i] * unit[j];
  }
  out.fit.residual_norm *= scale * scale;
  out.amplitude = out.fit.params[0];
  out.center_mhz = out.fit.params[1];
  out.width_mhz = out.fit.params[2];
  out.offset = out.fit.params[3];
  out.detected = out.fit.converged && !out.fit.std_errors.empty() && out.fit.std_errors[0] > 0.0 &&
                 out.amplitude > 5.0 * out.fit.std_errors[0];
  return out;
}

}  // namespace defect_foundry::odmr
