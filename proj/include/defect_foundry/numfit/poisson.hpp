#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry::numfit {

struct PoissonFit {
  double lambda_hat = 0.0;
  double std_error = 0.0;
  bool truncated = false;
  double loglik = 0.0;
  bool degenerate = false;  // all-zero sample: lambda_hat = 0
  std::size_t n = 0;
  int iterations = 0;
};

inline double poisson_pmf(std::uint64_t k, double lambda) {
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
}

/// P(n = k | n >= 1) for Poisson(lambda).
inline double ztp_pmf(std::uint64_t k, double lambda) {
  if (k == 0) return 0.0;
  return poisson_pmf(k, lambda) / -std::expm1(-lambda);
}

/// Mean of the zero-truncated Poisson: lambda / (1 - exp(-lambda)).
inline double ztp_mean(double lambda) {
  require(lambda > 0.0, "ztp_mean: lambda must be positive");
  return lambda / -std::expm1(-lambda);
}

/// Closed-form MLE: the sample mean, stderr sqrt(lambda / n).
inline PoissonFit poisson_mle(std::span<const std::uint64_t> counts) {
  require(!counts.empty(), "poisson_mle: empty sample");
  PoissonFit fit;
  fit.n = counts.size();
  double sum = 0.0;
  for (auto c : counts) sum += static_cast<double>(c);
  const double n = static_cast<double>(counts.size());
  fit.lambda_hat = sum / n;
  fit.std_error = std::sqrt(fit.lambda_hat / n);
  fit.degenerate = fit.lambda_hat == 0.0;
  if (!fit.degenerate) {
    for (auto c : counts) {
      const double k = static_cast<double>(c);
      fit.loglik += k * std::log(fit.lambda_hat) - fit.lambda_hat - std::lgamma(k + 1.0);
    }
  }
  return fit;
}

/// Inverts m = lambda / (1 - e^-lambda) by Newton's method safeguarded with
/// bisection on the bracket (0, m]. Requires m > 1.
inline double ztp_lambda_from_mean(double mean, int* iterations = nullptr) {
  if (!(mean > 1.0) || !std::isfinite(mean)) {
    throw InputError("ztp_mle: sample mean must exceed 1 for a zero-truncated Poisson (got " +
                     std::to_string(mean) + ")");
  }
  double lo = 0.0;
  double hi = mean;
  double lambda = mean;  // e^-mean is small for large means, so start at the upper end
  int it = 0;
  for (; it < 200; ++it) {
    const double q = -std::expm1(-lambda);  // 1 - e^-lambda
    const double h = lambda / q - mean;
    if (h > 0.0) hi = lambda; else lo = lambda;
    const double dh = (q - lambda * std::exp(-lambda)) / (q * q);
    double next = lambda - h / dh;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double step = std::fabs(next - lambda);
    lambda = next;
    if (step <= 1e-12 * std::max(1.0, lambda)) break;
  }
  if (iterations) *iterations = it + 1;
  return lambda;
}

/// MLE for the zero-truncated Poisson: solves mean = lambda / (1 - e^-lambda).
inline PoissonFit ztp_mle(std::span<const std::uint64_t> nonzero_counts) {
  require(!nonzero_counts.empty(), "ztp_mle: empty sample");
  double sum = 0.0;
  for (auto c : nonzero_counts) {
    require(c >= 1, "ztp_mle: observations must be >= 1");
    sum += static_cast<double>(c);
  }
  const double n = static_cast<double>(nonzero_counts.size());
  PoissonFit fit;
  fit.truncated = true;
  fit.n = nonzero_counts.size();
  fit.lambda_hat = ztp_lambda_from_mean(sum / n, &fit.iterations);
  const double lam = fit.lambda_hat;
  const double q = -std::expm1(-lam);
  const double info = 1.0 / (lam * q) - std::exp(-lam) / (q * q);
  fit.std_error = 1.0 / std::sqrt(n * info);
  for (auto c : nonzero_counts) {
    const double k = static_cast<double>(c);
    fit.loglik += k * std::log(lam) - lam - std::log(q) - std::lgamma(k + 1.0);
  }
  return fit;
}

}  // namespace defect_foundry::numfit
