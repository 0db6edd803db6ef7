#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/emitter/rates.hpp"

namespace defect_foundry::emitter {

/// Bi-exponential evaluation of a G2Shape at delay tau (ns).
inline double g2_closed_form(const G2Shape& shape, double tau_ns) {
  const double ax = std::fabs(tau_ns);
  const double slow = std::isfinite(shape.tau2_ns) ? std::exp(-ax / shape.tau2_ns) : 1.0;
  return 1.0 - (1.0 + shape.a) * std::exp(-ax / shape.tau1_ns) + shape.a * slow;
}

/// g2(tau) = p_e(|tau| | g at 0) / p_e(steady state), integrating the master
/// equation with classical RK4 at step <= fast time constant / 100.
inline std::vector<double> g2_oracle(const EmitterRates& r, std::span<const double> taus_ns) {
  r.validate();
  require(r.k_exc > 0.0, "g2_oracle: emitter must be pumped (k_exc > 0)");
  require(r.k_isc == 0.0 || r.k_des > 0.0, "g2_oracle: absorbing shelving state has no steady state");
  const double pe_inf = steady_state(r).excited;
  const double fast = r.k_exc + r.k_em + r.k_isc + r.k_des;  // upper bound on the fastest eigenvalue
  const double h_max = 1.0 / fast / 100.0;

  using State = std::array<double, 3>;
  auto deriv = [&](const State& p) -> State {
    return {-r.k_exc * p[0] + r.k_em * p[1] + r.k_des * p[2],
            r.k_exc * p[0] - (r.k_em + r.k_isc) * p[1],
            r.k_isc * p[1] - r.k_des * p[2]};
  };
  auto rk4 = [&](State& p, double h) {
    const State k1 = deriv(p);
    State tmp;
    for (int i = 0; i < 3; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
    const State k2 = deriv(tmp);
    for (int i = 0; i < 3; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
    const State k3 = deriv(tmp);
    for (int i = 0; i < 3; ++i) tmp[i] = p[i] + h * k3[i];
    const State k4 = deriv(tmp);
    for (int i = 0; i < 3; ++i) p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  };

  std::vector<std::size_t> order(taus_ns.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::fabs(taus_ns[i]) < std::fabs(taus_ns[j]); });

  std::vector<double> out(taus_ns.size());
  State p{1.0, 0.0, 0.0};
  double t = 0.0;
  for (std::size_t idx : order) {
    const double target = std::fabs(taus_ns[idx]);
    const double span = target - t;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / h_max));
      const double h = span / static_cast<double>(steps);
      for (long s = 0; s < steps; ++s) rk4(p, h);
      t = target;
    }
    out[idx] = p[1] / pe_inf;
  }
  return out;
}

}  // namespace defect_foundry::emitter
