#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) nonlinear least squares.
//
// Minimizes S(p) = sum_i w_i (y_i - f(p, x_i))^2 with w_i = 1/sigma_i^2
// (w_i = 1 when no sigmas are given). Each iteration solves
//   (J^T W J + lambda * D) delta = J^T W r,  D = diag(J^T W J) (floored),
// projects p + delta onto the box bounds, and accepts the step only if S
// decreases; lambda is divided by 10 on success and multiplied by 10 on
// failure. The Jacobian is a central finite difference with step
// max(1e-6, 1e-6 |p_j|) unless an analytic gradient is requested.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/fit_result.hpp"
#include "defect_foundry/numfit/linalg.hpp"

namespace defect_foundry::numfit {

struct ParamBounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

using ModelFn = std::function<double(std::span<const double> params, double x)>;
using GradientFn = std::function<void(std::span<const double> params, double x, std::span<double> grad)>;

struct ModelSpec {
  std::string name;
  std::vector<std::string> param_names;
  ModelFn eval;
  GradientFn gradient;              // optional analytic d f / d p
  std::vector<ParamBounds> bounds;  // empty = unbounded

  [[nodiscard]] std::size_t arity() const { return param_names.size(); }

  [[nodiscard]] bool in_bounds(std::span<const double> p) const {
    if (bounds.empty()) return true;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] < bounds[j].lo || p[j] > bounds[j].hi) return false;
    }
    return true;
  }

  void project(std::span<double> p) const {
    if (bounds.empty()) return;
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::clamp(p[j], bounds[j].lo, bounds[j].hi);
  }
};

struct FitOptions {
  int max_iterations = 200;
  double rel_tol = 1e-10;   // relative decrease of S on an accepted step
  double grad_tol = 1e-8;   // |J^T W r|
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  double max_damping = 1e16;
  bool analytic_jacobian = false;
};

inline double fd_step(double p) { return std::max(1e-6, 1e-6 * std::fabs(p)); }

/// Central-difference gradient of the model at one abscissa.
inline std::vector<double> fd_gradient(const ModelSpec& model, std::span<const double> p, double x) {
  std::vector<double> work(p.begin(), p.end());
  std::vector<double> grad(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double h = fd_step(p[j]);
    work[j] = p[j] + h;
    const double up = model.eval(work, x);
    work[j] = p[j] - h;
    const double down = model.eval(work, x);
    work[j] = p[j];
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace detail {

struct Problem {
  const ModelSpec& model;
  std::span<const double> xs;
  std::span<const double> ys;
  std::vector<double> weights;
  bool analytic;

  // Weighted SSR; +inf when any prediction is non-finite.
  double ssr(std::span<const double> p, std::vector<double>* residuals = nullptr) const {
    double s = 0.0;
    if (residuals) residuals->resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double f = model.eval(p, xs[i]);
      if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
      const double r = ys[i] - f;
      if (residuals) (*residuals)[i] = r;
      s += weights[i] * r * r;
    }
    return s;
  }

  // Normal matrix J^T W J and gradient J^T W r.
  void normal_equations(std::span<const double> p, const std::vector<double>& r, SquareMatrix& a,
                        std::vector<double>& g) const {
    const std::size_t m = p.size();
    a = SquareMatrix(m);
    g.assign(m, 0.0);
    std::vector<double> row(m);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (analytic) {
        model.gradient(p, xs[i], row);
      } else {
        row = fd_gradient(model, p, xs[i]);
      }
      for (std::size_t j = 0; j < m; ++j) {
        g[j] += weights[i] * row[j] * r[i];
        for (std::size_t k = 0; k <= j; ++k) a(j, k) += weights[i] * row[j] * row[k];
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < j; ++k) a(k, j) = a(j, k);
    }
  }
};

}  // namespace detail

inline FitResult fit_nlls(const ModelSpec& model, std::span<const double> p0, std::span<const double> xs,
                          std::span<const double> ys, std::span<const double> sigmas = {},
                          const FitOptions& options = {}) {
  const std::size_t m = model.arity();
  require(static_cast<bool>(model.eval), "fit_nlls: model has no evaluator");
  require(p0.size() == m, "fit_nlls: p0 size does not match model arity");
  require(xs.size() == ys.size(), "fit_nlls: xs and ys differ in length");
  require(xs.size() >= m, "fit_nlls: fewer data points than parameters");
  require(model.bounds.empty() || model.bounds.size() == m, "fit_nlls: bounds size mismatch");
  require(model.in_bounds(p0), "fit_nlls: p0 outside bounds");
  require(!options.analytic_jacobian || static_cast<bool>(model.gradient),
          "fit_nlls: analytic Jacobian requested but model has none");
  require(sigmas.empty() || sigmas.size() == xs.size(), "fit_nlls: sigmas length mismatch");

  detail::Problem problem{model, xs, ys, std::vector<double>(xs.size(), 1.0), options.analytic_jacobian};
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    require(sigmas[i] > 0.0 && std::isfinite(sigmas[i]), "fit_nlls: sigmas must be positive and finite");
    problem.weights[i] = 1.0 / (sigmas[i] * sigmas[i]);
  }
  for (double y : ys) require(std::isfinite(y), "fit_nlls: non-finite observation");

  FitResult result;
  result.names = model.param_names;
  std::vector<double> p(p0.begin(), p0.end());
  std::vector<double> r;
  double s = problem.ssr(p, &r);
  if (!std::isfinite(s)) throw InputError("fit_nlls: model '" + model.name + "' evaluates to NaN/inf at p0");

  double lambda = options.initial_damping;
  SquareMatrix a;
  std::vector<double> g;
  bool done = false;
  int it = 0;
  while (!done && it < options.max_iterations) {
    ++it;
    problem.normal_equations(p, r, a, g);
    double gnorm = 0.0;
    for (double gj : g) gnorm += gj * gj;
    gnorm = std::sqrt(gnorm);
    if (gnorm < options.grad_tol || s == 0.0) {
      result.converged = true;
      result.diagnostic = s == 0.0 ? "exact fit" : "gradient tolerance reached";
      break;
    }
    double max_diag = 0.0;
    for (std::size_t j = 0; j < m; ++j) max_diag = std::max(max_diag, a(j, j));
    const double floor = std::max(max_diag * 1e-12, 1e-300);

    bool accepted = false;
    while (!accepted) {
      SquareMatrix damped = a;
      for (std::size_t j = 0; j < m; ++j) damped(j, j) += lambda * std::max(a(j, j), floor);
      const auto delta = solve_spd(damped, g);
      if (delta) {
        std::vector<double> trial(m);
        for (std::size_t j = 0; j < m; ++j) trial[j] = p[j] + (*delta)[j];
        model.project(trial);
        std::vector<double> r_trial;
        const double s_trial = problem.ssr(trial, &r_trial);
        if (s_trial < s) {
          const double rel = (s - s_trial) / s;
          p = std::move(trial);
          r = std::move(r_trial);
          s = s_trial;
          lambda = std::max(lambda / options.damping_factor, 1e-15);
          accepted = true;
          if (rel < options.rel_tol || s == 0.0) {
            result.converged = true;
            result.diagnostic = s == 0.0 ? "exact fit" : "relative decrease below tolerance";
            done = true;
          }
          continue;
        }
      }
      lambda *= options.damping_factor;
      if (lambda > options.max_damping) {
        // No step of any length lowers S: numerical minimum (or an active bound).
        result.converged = true;
        result.diagnostic = "no further decrease";
        done = true;
        break;
      }
    }
  }
  if (!done && !result.converged) result.diagnostic = "maximum iterations reached";

  result.params = p;
  result.residual_norm = s;
  result.iterations = std::max(it, 1);

  // Covariance from the Gauss-Newton Hessian at the solution.
  problem.normal_equations(p, r, a, g);
  const auto inv = invert_spd(a);
  result.std_errors.assign(m, std::numeric_limits<double>::infinity());
  if (!inv) {
    result.converged = false;
    result.diagnostic = "singular normal equations";
  } else {
    const std::size_t dof = xs.size() > m ? xs.size() - m : 1;
    const double scale = s / static_cast<double>(dof);
    result.covariance.resize(m * m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < m; ++k) result.covariance[j * m + k] = (*inv)(j, k) * scale;
      result.std_errors[j] = std::sqrt(std::max(0.0, result.covariance[j * m + j]));
    }
  }
  return result;
}

}  // namespace defect_foundry::numfit
