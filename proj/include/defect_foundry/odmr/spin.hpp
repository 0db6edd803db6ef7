#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry::odmr {

using cplx = std::complex<double>;
using Mat4 = std::array<std::array<cplx, 4>, 4>;

/// Bohr magneton over Planck's constant, MHz per gauss.
inline constexpr double kBohrMhzPerGauss = 1.39962449361;

inline Mat4 zero4() {
  Mat4 m{};
  return m;
}

inline Mat4 identity4() {
  Mat4 m = zero4();
  for (int k = 0; k < 4; ++k) m[k][k] = 1.0;
  return m;
}

inline Mat4 operator*(const Mat4& a, const Mat4& b) {
  Mat4 c = zero4();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 4; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat4 operator+(const Mat4& a, const Mat4& b) {
  Mat4 c = a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) c[i][j] += b[i][j];
  return c;
}

inline Mat4 operator*(cplx s, const Mat4& a) {
  Mat4 c = a;
  for (auto& row : c)
    for (auto& v : row) v *= s;
  return c;
}

inline Mat4 adjoint(const Mat4& a) {
  Mat4 c = zero4();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) c[i][j] = std::conj(a[j][i]);
  return c;
}

struct SpinMatrices {
  Mat4 x;
  Mat4 y;
  Mat4 z;
};

/// S = 3/2 operators in the basis m = (3/2, 1/2, -1/2, -3/2).
inline SpinMatrices spin_matrices() {
  constexpr double s = 1.5;
  const std::array<double, 4> m{1.5, 0.5, -0.5, -1.5};
  SpinMatrices out{zero4(), zero4(), zero4()};
  for (int k = 0; k < 4; ++k) out.z[k][k] = m[k];
  // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>; |m+1> sits one index lower.
  for (int k = 1; k < 4; ++k) {
    const double c = std::sqrt(s * (s + 1.0) - m[k] * (m[k] + 1.0));
    out.x[k - 1][k] = 0.5 * c;
    out.x[k][k - 1] = 0.5 * c;
    out.y[k - 1][k] = cplx(0.0, -0.5 * c);
    out.y[k][k - 1] = cplx(0.0, 0.5 * c);
  }
  return out;
}

struct SpinSystem {
  double D_mhz = 35.0;
  double g_factor = 2.00;
  std::array<double, 3> B_gauss{0.0, 0.0, 0.0};

  [[nodiscard]] double gyromag_mhz_per_gauss() const { return kBohrMhzPerGauss * g_factor; }

  void validate() const {
    require(std::isfinite(D_mhz), "spin system: D must be finite");
    require(std::isfinite(g_factor), "spin system: g factor must be finite");
    for (double b : B_gauss) require(std::isfinite(b), "spin system: field components must be finite");
  }

  [[nodiscard]] bool axial() const { return B_gauss[0] == 0.0 && B_gauss[1] == 0.0; }
};

/// H = D Sz^2 + g mu_B B.S in MHz.
inline Mat4 hamiltonian(const SpinSystem& sys) {
  sys.validate();
  const auto s = spin_matrices();
  const double gm = sys.gyromag_mhz_per_gauss();
  Mat4 h = cplx(sys.D_mhz) * (s.z * s.z);
  h = h + cplx(gm * sys.B_gauss[0]) * s.x;
  h = h + cplx(gm * sys.B_gauss[1]) * s.y;
  h = h + cplx(gm * sys.B_gauss[2]) * s.z;
  return h;
}

struct Eigen4 {
  std::array<double, 4> values{};  // ascending
  Mat4 vectors{};                  // column k is the eigenvector of values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi diagonalization of a Hermitian 4x4 matrix. The input is
/// symmetrized as (H + H^dagger)/2 first.
inline Eigen4 eigh(const Mat4& input, double tol = 1e-12) {
  Mat4 a = 0.5 * (input + adjoint(input));
  Mat4 v = identity4();
  double scale = 0.0;
  for (const auto& row : a)
    for (const auto& x : row) scale = std::max(scale, std::abs(x));
  const double thresh = tol * std::max(scale, 1e-300);

  Eigen4 out;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 4; ++p)
      for (int q = p + 1; q < 4; ++q) off = std::max(off, std::abs(a[p][q]));
    out.sweeps = sweep;
    if (off <= thresh) break;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        const double mag = std::abs(a[p][q]);
        if (mag <= 1e-3 * thresh) continue;
        // Phase the (p, q) element to a real positive value, then rotate.
        const cplx phase = a[p][q] / mag;
        const double theta = 0.5 * std::atan2(2.0 * mag, a[q][q].real() - a[p][p].real());
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        Mat4 u = identity4();
        u[p][p] = c;
        u[p][q] = s;
        u[q][p] = -s * std::conj(phase);
        u[q][q] = c * std::conj(phase);
        a = adjoint(u) * a * u;
        v = v * u;
        a[p][q] = 0.0;
        a[q][p] = 0.0;
      }
    }
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i].real() < a[j][j].real(); });
  for (int k = 0; k < 4; ++k) {
    out.values[k] = a[order[k]][order[k]].real();
    for (int r = 0; r < 4; ++r) out.vectors[r][k] = v[r][order[k]];
  }
  return out;
}

inline std::array<double, 4> eigenenergies(const SpinSystem& sys) { return eigh(hamiltonian(sys)).values; }

namespace detail {

inline void sort_unique(std::vector<double>& f, double merge_tol) {
  std::sort(f.begin(), f.end());
  std::vector<double> out;
  for (double x : f) {
    if (!out.empty() && std::fabs(x - out.back()) <= merge_tol * std::max(1.0, std::fabs(x))) continue;
    out.push_back(x);
  }
  f = std::move(out);
}

}  // namespace detail

/// Axial field only: |+-1/2> <-> |+-3/2> at |2D +- g mu_B Bz| and
/// |1/2> <-> |-1/2> at |g mu_B Bz|. Zero-frequency lines are dropped and
/// coincident lines merged.
inline std::vector<double> axial_transitions(const SpinSystem& sys) {
  sys.validate();
  require(sys.axial(), "axial_transitions: field must be along z");
  const double z = sys.gyromag_mhz_per_gauss() * sys.B_gauss[2];
  std::vector<double> f;
  for (double x : {std::fabs(2.0 * sys.D_mhz + z), std::fabs(2.0 * sys.D_mhz - z), std::fabs(z)}) {
    if (x > 1e-9) f.push_back(x);
  }
  detail::sort_unique(f, 1e-9);
  return f;
}

/// Any field direction: eigenstate pairs with a nonvanishing transverse
/// spin matrix element |<a|Sx|b>|^2 + |<a|Sy|b>|^2 (the magnetic-dipole
/// selection rule for a linearly polarized drive averaged over its axis).
inline std::vector<double> numeric_transitions(const SpinSystem& sys, double min_strength = 1e-6) {
  const auto e = eigh(hamiltonian(sys));
  const auto s = spin_matrices();
  auto element = [&](const Mat4& op, int a, int b) {
    cplx acc = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) acc += std::conj(e.vectors[i][a]) * op[i][j] * e.vectors[j][b];
    return acc;
  };
  std::vector<double> f;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      const double gap = e.values[b] - e.values[a];
      if (gap <= 1e-9) continue;
      const double strength = std::norm(element(s.x, a, b)) + std::norm(element(s.y, a, b));
      if (strength >= min_strength) f.push_back(gap);
    }
  }
  detail::sort_unique(f, 1e-9);
  return f;
}

inline std::vector<double> transition_frequencies(const SpinSystem& sys) {
  return sys.axial() ? axial_transitions(sys) : numeric_transitions(sys);
}

}  // namespace defect_foundry::odmr
