#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/fit_result.hpp"
#include "defect_foundry/core/histogram.hpp"
#include "defect_foundry/hbt/correlate.hpp"
#include "defect_foundry/numfit/models.hpp"
#include "defect_foundry/numfit/nlls.hpp"

namespace defect_foundry::hbt {

struct G2Fit {
  double a = 0.0;
  double tau1_ns = 0.0;
  double tau2_ns = 0.0;
  double g2_zero = 0.0;               // model value at tau = 0 (zero by construction)
  double measured_g2_zero = 0.0;      // corrected zero-delay bin
  double measured_g2_zero_err = 0.0;  // Poisson error of that bin after correction
  double rho = 1.0;
  bool tau2_identifiable = true;
  std::string classification;  // "single", "multiple", "no antibunching"
  std::vector<std::string> warnings;
  FitResult fit;
};

struct ZeroDelayEstimate {
  double g2_zero = 0.0;
  double std_error = 0.0;
  FitResult fit;
};

namespace detail {

struct G2Data {
  std::vector<double> taus;
  std::vector<double> values;
};

inline G2Data fit_data(const CorrelationHistogram& corrected) {
  G2Data d;
  d.taus.reserve(corrected.size());
  d.values.reserve(corrected.size());
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    d.taus.push_back(corrected.tau_ns(i));
    d.values.push_back(corrected.values[i]);
  }
  return d;
}

// Mean of the bins at +k and -k.
inline std::vector<double> fold(const CorrelationHistogram& h) {
  const std::size_t half = h.half_bins();
  std::vector<double> out(half + 1);
  out[0] = h.values[half];
  for (std::size_t k = 1; k <= half; ++k) out[k] = 0.5 * (h.values[half + k] + h.values[half - k]);
  return out;
}

inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t radius) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= radius ? i - radius : 0;
    const std::size_t hi = std::min(v.size() - 1, i + radius);
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += v[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

struct G2Start {
  double a;
  double tau1;
  double tau2;
};

// tau1 from the first 0.5 crossing, a from the shoulder maximum, tau2 from a
// log-linear fit of the block-averaged shoulder excess.
inline G2Start initial_guess(const CorrelationHistogram& corrected) {
  const double bin_ns = static_cast<double>(corrected.bin_width) / static_cast<double>(kPsPerNs);
  const auto folded = fold(corrected);
  const auto smooth = moving_average(folded, 1);

  double tau1 = bin_ns;
  for (std::size_t k = 0; k < smooth.size(); ++k) {
    if (smooth[k] >= 0.5) {
      tau1 = std::max(bin_ns, static_cast<double>(k) * bin_ns / std::log(2.0));
      break;
    }
  }
  const auto wide = moving_average(folded, 4);
  const double a = std::clamp(*std::max_element(wide.begin(), wide.end()) - 1.0, 0.0, 50.0);

  // Shoulder: blocks of ~2 tau1 starting at 3 tau1; stop when the excess is
  // no longer significant.
  const auto start = static_cast<std::size_t>(std::ceil(3.0 * tau1 / bin_ns));
  const std::size_t block = std::max<std::size_t>(3, static_cast<std::size_t>(2.0 * tau1 / bin_ns));
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t b0 = start; b0 + block <= folded.size(); b0 += block) {
    double s = 0.0;
    double s2 = 0.0;
    for (std::size_t k = b0; k < b0 + block; ++k) {
      s += folded[k] - 1.0;
      s2 += (folded[k] - 1.0) * (folded[k] - 1.0);
    }
    const double n = static_cast<double>(block);
    const double mean = s / n;
    const double se = std::sqrt(std::max(0.0, s2 / n - mean * mean) / n);
    if (!(mean > 2.0 * se) || mean <= 0.0) break;
    xs.push_back((static_cast<double>(b0) + 0.5 * (n - 1.0)) * bin_ns);
    ys.push_back(std::log(mean));
  }
  double tau2 = 20.0 * tau1;
  if (xs.size() >= 2) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    if (slope < 0.0) tau2 = -1.0 / slope;
  }
  const double window_ns = static_cast<double>(corrected.window) / static_cast<double>(kPsPerNs);
  tau2 = std::clamp(tau2, 2.0 * tau1, std::max(2.0 * tau1, window_ns));
  return {a, tau1, tau2};
}

inline bool better(const FitResult& candidate, const FitResult& best) {
  if (best.params.empty()) return true;
  if (candidate.converged != best.converged) return candidate.converged;
  return candidate.residual_norm < best.residual_norm;
}

}  // namespace detail

/// Corrects the raw histogram with rho and fits the three-level model.
inline G2Fit fit_g2(const CorrelationHistogram& raw, double rho) {
  raw.validate();
  const CorrelationHistogram corrected = background_correct(raw, rho);
  const auto data = detail::fit_data(corrected);
  const auto start = detail::initial_guess(corrected);

  G2Fit out;
  out.rho = rho;
  const std::size_t c = corrected.center_index();
  out.measured_g2_zero = corrected.values[c];
  out.measured_g2_zero_err =
      std::sqrt(std::max<double>(1.0, static_cast<double>(raw.raw_pairs[c]))) / raw.norm_factor / (rho * rho);

  const auto model = numfit::g2_model();
  FitResult best;
  const double starts[][3] = {{start.a, start.tau1, start.tau2},
                              {start.a, start.tau1, 3.0 * start.tau2},
                              {std::max(start.a, 0.2), start.tau1, std::max(2.0 * start.tau1, start.tau2 / 3.0)}};
  for (const auto& s : starts) {
    std::vector<double> p0{s[0], s[1], s[2]};
    model.project(p0);
    FitResult r = numfit::fit_nlls(model, p0, data.taus, data.values);
    if (detail::better(r, best)) best = std::move(r);
  }

  out.a = best.params[0];
  out.tau1_ns = best.params[1];
  out.tau2_ns = best.params[2];
  out.g2_zero = model.eval(best.params, 0.0);
  const double a_err = best.std_errors[0];
  out.tau2_identifiable = best.converged && std::isfinite(a_err) && out.a > 3.0 * a_err;
  out.fit = std::move(best);

  if (!out.tau2_identifiable) {
    // Shoulder not resolved: fall back to the two-level curve for tau1.
    const auto two = numfit::g2_two_level_model();
    std::vector<double> p0{std::clamp(start.tau1, 1e-3, 1e5)};
    FitResult r = numfit::fit_nlls(two, p0, data.taus, data.values);
    out.a = 0.0;
    out.tau1_ns = r.params[0];
    out.g2_zero = 0.0;
    out.warnings.push_back("bunching amplitude not significant: tau2 unidentifiable, two-level fit used");
    out.fit = std::move(r);
  }
  if (!out.fit.converged) out.warnings.push_back("fit did not converge: " + out.fit.diagnostic);
  const double window_ns = static_cast<double>(raw.window) / static_cast<double>(kPsPerNs);
  if (out.tau2_identifiable && window_ns < 5.0 * out.tau2_ns) {
    out.warnings.push_back("histogram window shorter than 5 tau2");
  }

  const double sig = out.measured_g2_zero_err;
  if (out.measured_g2_zero < 0.5 && out.measured_g2_zero < 1.0 - 3.0 * sig) {
    out.classification = "single";
  } else if (out.measured_g2_zero < 1.0 - 3.0 * sig) {
    out.classification = "multiple";
  } else {
    out.classification = "no antibunching";
  }
  return out;
}

/// g2(0) from a fit with free dip depth d (g2(0) = 1 - d), using every bin
/// rather than the zero-delay bin alone.
inline ZeroDelayEstimate estimate_g2_zero(const CorrelationHistogram& raw, double rho) {
  raw.validate();
  const CorrelationHistogram corrected = background_correct(raw, rho);
  const auto data = detail::fit_data(corrected);
  const auto start = detail::initial_guess(corrected);
  const auto model = numfit::g2_depth_model();
  FitResult best;
  for (double depth : {1.0, 0.5}) {
    std::vector<double> p0{depth, start.a, start.tau1, start.tau2};
    model.project(p0);
    FitResult r = numfit::fit_nlls(model, p0, data.taus, data.values);
    if (detail::better(r, best)) best = std::move(r);
  }
  ZeroDelayEstimate est;
  est.g2_zero = 1.0 - best.params[0];
  est.std_error = best.std_errors[0];
  est.fit = std::move(best);
  return est;
}

}  // namespace defect_foundry::hbt
