#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace defect_foundry::numfit {

/// Dense row-major square matrix small enough for the fitting problems here.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit SquareMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return a[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * n + c]; }
};

/// Cholesky factor L (lower) of a symmetric positive-definite matrix, or
/// nullopt when a pivot falls below rel_tol times the largest diagonal.
inline std::optional<SquareMatrix> cholesky(const SquareMatrix& m, double rel_tol = 1e-13) {
  const std::size_t n = m.n;
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(m(i, i)));
  if (max_diag == 0.0) return std::nullopt;
  SquareMatrix l(n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_tol * max_diag)) return std::nullopt;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

inline std::vector<double> cholesky_solve(const SquareMatrix& l, std::vector<double> b) {
  const std::size_t n = l.n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l(i, k) * b[k];
    b[i] /= l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) b[ii] -= l(k, ii) * b[k];
    b[ii] /= l(ii, ii);
  }
  return b;
}

inline std::optional<std::vector<double>> solve_spd(const SquareMatrix& m, const std::vector<double>& b) {
  auto l = cholesky(m);
  if (!l) return std::nullopt;
  return cholesky_solve(*l, b);
}

inline std::optional<SquareMatrix> invert_spd(const SquareMatrix& m) {
  auto l = cholesky(m);
  if (!l) return std::nullopt;
  SquareMatrix inv(m.n);
  for (std::size_t c = 0; c < m.n; ++c) {
    std::vector<double> e(m.n, 0.0);
    e[c] = 1.0;
    const auto col = cholesky_solve(*l, e);
    for (std::size_t r = 0; r < m.n; ++r) inv(r, c) = col[r];
  }
  return inv;
}

}  // namespace defect_foundry::numfit
