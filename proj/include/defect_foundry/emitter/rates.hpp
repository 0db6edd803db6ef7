#pragma once

// Three-level emitter kinetics: ground (g), excited (e), shelving (s).
//   g -> e  k_exc   (optical pumping, proportional to power)
//   e -> g  k_em    (radiative; one photon per transition)
//   e -> s  k_isc   (intersystem crossing into the dark state)
//   s -> g  k_des   (de-shelving)
// All rates are in 1/ns.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry::emitter {

struct EmitterRates {
  double k_exc = 0.0;
  double k_em = 1.0;
  double k_isc = 0.0;
  double k_des = 0.0;

  void validate() const {
    require(k_exc >= 0.0 && k_isc >= 0.0 && k_des >= 0.0, "emitter rates must be non-negative");
    require(k_em > 0.0, "radiative rate k_em must be positive");
    require(std::isfinite(k_exc + k_em + k_isc + k_des), "emitter rates must be finite");
  }
};

struct DetectionModel {
  double efficiency = 1.0;       // probability a radiated photon is detected
  double background_rate = 0.0;  // counts/s, summed over both channels
  double split = 0.5;            // probability a detection lands on channel 0

  void validate() const {
    require(efficiency >= 0.0 && efficiency <= 1.0, "detection efficiency must lie in [0, 1]");
    require(split >= 0.0 && split <= 1.0, "channel split must lie in [0, 1]");
    require(background_rate >= 0.0 && std::isfinite(background_rate), "background rate must be >= 0");
  }
};

struct Occupations {
  double ground = 1.0;
  double excited = 0.0;
  double shelved = 0.0;
  bool absorbing = false;  // shelving reachable but never left: all population ends in s
};

/// Stationary distribution of the three-state master equation.
inline Occupations steady_state(const EmitterRates& r) {
  r.validate();
  Occupations occ;
  if (r.k_exc == 0.0) return occ;  // dark emitter stays in g
  if (r.k_isc == 0.0) {
    const double z = r.k_exc + r.k_em;
    occ.ground = r.k_em / z;
    occ.excited = r.k_exc / z;
    return occ;
  }
  if (r.k_des == 0.0) {
    occ.ground = 0.0;
    occ.shelved = 1.0;
    occ.absorbing = true;
    return occ;
  }
  // Null space of the generator: p ~ (k_des (k_em + k_isc), k_exc k_des, k_exc k_isc).
  const double wg = r.k_des * (r.k_em + r.k_isc);
  const double we = r.k_exc * r.k_des;
  const double ws = r.k_exc * r.k_isc;
  const double z = wg + we + ws;
  occ.ground = wg / z;
  occ.excited = we / z;
  occ.shelved = ws / z;
  return occ;
}

/// Radiated photon rate in photons/s.
inline double emission_rate_cps(const EmitterRates& r) { return r.k_em * steady_state(r).excited * 1e9; }

/// Bi-exponential form of the normalized autocorrelation:
/// g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2).
struct G2Shape {
  double a = 0.0;
  double tau1_ns = 0.0;
  double tau2_ns = std::numeric_limits<double>::infinity();
};

/// Closed form from the two non-zero eigenvalues of the rate matrix.
/// tau1 belongs to the fast mode; a two-level emitter (k_isc = 0) reports a = 0.
inline G2Shape g2_shape(const EmitterRates& r) {
  r.validate();
  require(r.k_exc > 0.0, "g2_shape: emitter must be pumped (k_exc > 0)");
  G2Shape shape;
  if (r.k_isc == 0.0) {
    shape.tau1_ns = 1.0 / (r.k_exc + r.k_em);
    if (r.k_des > 0.0) shape.tau2_ns = 1.0 / r.k_des;
    return shape;
  }
  require(r.k_des > 0.0, "g2_shape: shelving state is absorbing (k_des = 0)");
  const double b = r.k_exc + r.k_em + r.k_isc + r.k_des;
  const double c = r.k_exc * r.k_isc + r.k_exc * r.k_des + r.k_em * r.k_des + r.k_isc * r.k_des;
  const double disc = std::sqrt(std::max(0.0, b * b - 4.0 * c));
  const double fast = 0.5 * (b + disc);
  const double slow = c / fast;  // product of roots is c
  shape.tau1_ns = 1.0 / fast;
  shape.tau2_ns = 1.0 / slow;
  // g2(0) = 0 and d p_e/dt (0) = k_exc fix both amplitudes.
  shape.a = fast == slow ? 0.0 : (c / r.k_des - fast) / (fast - slow);
  return shape;
}

/// Saturation parameter k_exc / k_sat where emission = I_inf * s / (1 + s).
inline double saturation_parameter(const EmitterRates& r) {
  r.validate();
  const double k_sat = r.k_isc == 0.0 ? r.k_em
                                      : r.k_des * (r.k_em + r.k_isc) / (r.k_des + r.k_isc);
  return r.k_exc / k_sat;
}

/// Inverse of g2_shape at a prescribed saturation parameter s = P / P0.
///
/// Given (a, tau1, tau2) the eigenvalue sum/product and the initial slope fix
/// k_des, k_em + k_isc and a relation between k_exc and k_isc; the remaining
/// freedom is resolved by requiring k_exc / k_sat = s. Throws when no
/// physical (all-positive) rate set exists.
inline EmitterRates rates_from_g2_shape(const G2Shape& shape, double saturation) {
  require(shape.a > 0.0, "rates_from_g2_shape: needs a > 0 (three-level emitter)");
  require(shape.tau1_ns > 0.0 && shape.tau2_ns > shape.tau1_ns, "rates_from_g2_shape: needs 0 < tau1 < tau2");
  require(saturation > 0.0, "rates_from_g2_shape: saturation parameter must be positive");
  const double l1 = 1.0 / shape.tau1_ns;
  const double l2 = 1.0 / shape.tau2_ns;
  const double sum = l1 + l2;
  const double prod = l1 * l2;
  const double k_des = prod / (l1 * (1.0 + shape.a) - l2 * shape.a);
  require(k_des > 0.0 && k_des < sum, "rates_from_g2_shape: no positive de-shelving rate");

  auto rates_for = [&](double k_exc) {
    const double k_out = sum - k_exc - k_des;  // k_em + k_isc
    EmitterRates r;
    r.k_exc = k_exc;
    r.k_des = k_des;
    r.k_isc = (prod - k_exc * k_des - k_des * k_out) / k_exc;
    r.k_em = k_out - r.k_isc;
    return r;
  };
  auto residual = [&](double k_exc) {
    const EmitterRates r = rates_for(k_exc);
    const double k_sat = r.k_des * (r.k_em + r.k_isc) / (r.k_des + r.k_isc);
    return k_exc / k_sat - saturation;
  };
  auto physical = [&](double k_exc) {
    const EmitterRates r = rates_for(k_exc);
    return r.k_isc > 0.0 && r.k_em > 0.0;
  };

  const double hi_limit = sum - k_des;
  constexpr int kScan = 4000;
  double prev_x = 0.0;
  double prev_f = 0.0;
  bool have_prev = false;
  for (int i = 1; i < kScan; ++i) {
    const double x = hi_limit * i / kScan;
    if (!physical(x)) {
      have_prev = false;
      continue;
    }
    const double f = residual(x);
    if (have_prev && (f == 0.0 || (f > 0.0) != (prev_f > 0.0))) {
      double lo = prev_x;
      double hi = x;
      double f_lo = prev_f;
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = residual(mid);
        if ((f_mid > 0.0) == (f_lo > 0.0)) {
          lo = mid;
          f_lo = f_mid;
        } else {
          hi = mid;
        }
      }
      const EmitterRates r = rates_for(0.5 * (lo + hi));
      r.validate();
      return r;
    }
    prev_x = x;
    prev_f = f;
    have_prev = true;
  }
  throw InputError("rates_from_g2_shape: no physical rate set for the requested shape and saturation");
}

/// Power dependence: k_exc = c_p * P, optional linear growth of k_des with P.
struct PowerModel {
  double c_p = 0.0;  // 1/ns per mW
  double k_em = 1.0;
  double k_isc = 0.0;
  double k_des = 0.0;
  double k_des_slope = 0.0;  // 1/ns per mW; 0 keeps the shelving branch power independent

  [[nodiscard]] EmitterRates at(double power_mw) const {
    require(power_mw >= 0.0, "power must be non-negative");
    EmitterRates r{c_p * power_mw, k_em, k_isc, k_des + k_des_slope * power_mw};
    r.validate();
    return r;
  }

  /// P0 of I(P) = I_s / (1 + P0 / P); exact when k_des_slope = 0.
  [[nodiscard]] double saturation_power_mw() const {
    const double k_sat = k_isc == 0.0 ? k_em : k_des * (k_em + k_isc) / (k_des + k_isc);
    return k_sat / c_p;
  }

  /// Radiated photons/s in the P -> infinity limit (k_des_slope = 0).
  [[nodiscard]] double saturated_emission_cps() const {
    const double frac = k_isc == 0.0 ? 1.0 : k_des / (k_des + k_isc);
    return k_em * frac * 1e9;
  }
};

}  // namespace defect_foundry::emitter
