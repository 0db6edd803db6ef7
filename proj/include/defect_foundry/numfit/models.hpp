#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "defect_foundry/numfit/nlls.hpp"

namespace defect_foundry::numfit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// y = c + A (w/2)^2 / ((x - f0)^2 + (w/2)^2); parameters {A, f0, w, c}.
/// A >= 0 (a peak) and w > 0; without them a start one or two widths off
/// the line can settle into a dip on the far side of the sweep.
inline ModelSpec lorentzian_model() {
  ModelSpec m;
  m.name = "lorentzian";
  m.param_names = {"A", "f0", "w", "c"};
  m.eval = [](std::span<const double> p, double x) {
    const double h = 0.5 * p[2];
    const double dx = x - p[1];
    return p[3] + p[0] * h * h / (dx * dx + h * h);
  };
  m.gradient = [](std::span<const double> p, double x, std::span<double> grad) {
    const double h = 0.5 * p[2];
    const double dx = x - p[1];
    const double den = dx * dx + h * h;
    grad[0] = h * h / den;
    grad[1] = p[0] * h * h * 2.0 * dx / (den * den);
    grad[2] = p[0] * h * dx * dx / (den * den);
    grad[3] = 1.0;
  };
  m.bounds = {{0.0, kInf}, {-kInf, kInf}, {1e-9, kInf}, {-kInf, kInf}};
  return m;
}

/// Three-level antibunching curve in delay x (ns):
/// g2 = 1 - (1 + a) exp(-|x|/tau1) + a exp(-|x|/tau2); parameters {a, tau1, tau2}.
inline ModelSpec g2_model() {
  ModelSpec m;
  m.name = "g2_three_level";
  m.param_names = {"a", "tau1", "tau2"};
  m.eval = [](std::span<const double> p, double x) {
    const double ax = std::fabs(x);
    return 1.0 - (1.0 + p[0]) * std::exp(-ax / p[1]) + p[0] * std::exp(-ax / p[2]);
  };
  m.gradient = [](std::span<const double> p, double x, std::span<double> grad) {
    const double ax = std::fabs(x);
    const double e1 = std::exp(-ax / p[1]);
    const double e2 = std::exp(-ax / p[2]);
    grad[0] = e2 - e1;
    grad[1] = -(1.0 + p[0]) * e1 * ax / (p[1] * p[1]);
    grad[2] = p[0] * e2 * ax / (p[2] * p[2]);
  };
  m.bounds = {{0.0, 100.0}, {1e-3, 1e5}, {1e-3, 1e6}};
  return m;
}

/// Two-level limit (a = 0): g2 = 1 - exp(-|x|/tau1); parameter {tau1}.
inline ModelSpec g2_two_level_model() {
  ModelSpec m;
  m.name = "g2_two_level";
  m.param_names = {"tau1"};
  m.eval = [](std::span<const double> p, double x) { return 1.0 - std::exp(-std::fabs(x) / p[0]); };
  m.gradient = [](std::span<const double> p, double x, std::span<double> grad) {
    const double ax = std::fabs(x);
    grad[0] = -std::exp(-ax / p[0]) * ax / (p[0] * p[0]);
  };
  m.bounds = {{1e-3, 1e5}};
  return m;
}

/// Three-level curve with free dip depth d, so g2(0) = 1 - d:
/// g2 = 1 - d [(1 + a) exp(-|x|/tau1) - a exp(-|x|/tau2)]; parameters {d, a, tau1, tau2}.
inline ModelSpec g2_depth_model() {
  ModelSpec m;
  m.name = "g2_free_depth";
  m.param_names = {"d", "a", "tau1", "tau2"};
  m.eval = [](std::span<const double> p, double x) {
    const double ax = std::fabs(x);
    return 1.0 - p[0] * ((1.0 + p[1]) * std::exp(-ax / p[2]) - p[1] * std::exp(-ax / p[3]));
  };
  m.gradient = [](std::span<const double> p, double x, std::span<double> grad) {
    const double ax = std::fabs(x);
    const double e1 = std::exp(-ax / p[2]);
    const double e2 = std::exp(-ax / p[3]);
    grad[0] = -((1.0 + p[1]) * e1 - p[1] * e2);
    grad[1] = -p[0] * (e1 - e2);
    grad[2] = -p[0] * (1.0 + p[1]) * e1 * ax / (p[2] * p[2]);
    grad[3] = p[0] * p[1] * e2 * ax / (p[3] * p[3]);
  };
  m.bounds = {{-1.0, 2.0}, {0.0, 100.0}, {1e-3, 1e5}, {1e-3, 1e6}};
  return m;
}

/// Saturation curve I(P) = I_s / (1 + P0 / P); parameters {I_s, P0}.
inline ModelSpec saturation_model() {
  ModelSpec m;
  m.name = "saturation";
  m.param_names = {"I_s", "P0"};
  m.eval = [](std::span<const double> p, double x) { return p[0] * x / (x + p[1]); };
  m.gradient = [](std::span<const double> p, double x, std::span<double> grad) {
    const double den = x + p[1];
    grad[0] = x / den;
    grad[1] = -p[0] * x / (den * den);
  };
  m.bounds = {{1e-12, kInf}, {1e-12, kInf}};
  return m;
}

}  // namespace defect_foundry::numfit
