#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/scanstats/site.hpp"

namespace defect_foundry::scanstats {

struct SpotPosition {
  double x_um = 0.0;
  double y_um = 0.0;
  double intensity = 0.0;
};

/// Square lattice with fixed pitch: node (i, j) sits at
/// origin + R(rotation) * pitch * (i, j).
struct GridRegistration {
  double origin_x_um = 0.0;
  double origin_y_um = 0.0;
  double rotation_deg = 0.0;  // in (-45, 45]
  double pitch_um = 0.0;
  double residual_rms_um = 0.0;
  int columns = 0;
  int rows = 0;
  std::vector<std::pair<int, int>> assignment;  // per input spot; (-1, -1) when dropped
  std::vector<SiteRecord> sites;                 // row-major over columns x rows
  std::vector<std::string> warnings;

  [[nodiscard]] std::pair<double, double> node_position(double i, double j) const {
    const double th = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th);
    const double s = std::sin(th);
    return {origin_x_um + pitch_um * (c * i - s * j), origin_y_um + pitch_um * (s * i + c * j)};
  }
};

struct GridOptions {
  std::optional<int> columns;  // lattice extent; default = bounding box of assigned spots
  std::optional<int> rows;
  int refinement_passes = 5;
};

namespace detail {

// Smallest principal variance of the positions, compared with the pitch.
inline bool collinear(std::span<const SpotPosition> spots, double pitch) {
  double mx = 0.0;
  double my = 0.0;
  for (const auto& s : spots) {
    mx += s.x_um;
    my += s.y_um;
  }
  mx /= static_cast<double>(spots.size());
  my /= static_cast<double>(spots.size());
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (const auto& s : spots) {
    sxx += (s.x_um - mx) * (s.x_um - mx);
    syy += (s.y_um - my) * (s.y_um - my);
    sxy += (s.x_um - mx) * (s.y_um - my);
  }
  const double n = static_cast<double>(spots.size());
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double small = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
  return small < 1e-4 * pitch * pitch;
}

// Orientation modulo 90 degrees from near-neighbour bond angles.
inline std::optional<double> bond_orientation(std::span<const SpotPosition> spots, double pitch) {
  std::complex<double> acc = 0.0;
  int bonds = 0;
  for (std::size_t a = 0; a < spots.size(); ++a) {
    for (std::size_t b = a + 1; b < spots.size(); ++b) {
      const double dx = spots[b].x_um - spots[a].x_um;
      const double dy = spots[b].y_um - spots[a].y_um;
      const double d = std::hypot(dx, dy);
      if (d < 0.7 * pitch || d > 1.3 * pitch) continue;
      acc += std::polar(1.0, 4.0 * std::atan2(dy, dx));
      ++bonds;
    }
  }
  if (bonds == 0 || std::abs(acc) == 0.0) return std::nullopt;
  return std::arg(acc) / 4.0;
}

}  // namespace detail

/// Fits a square lattice of known pitch to spot positions and assigns every
/// spot to its nearest node. Nodes without a spot become undetected sites.
inline GridRegistration register_grid(std::span<const SpotPosition> spots, double pitch_um,
                                      const GridOptions& options = {}) {
  require(spots.size() >= 3, "register_grid: need at least 3 spots");
  require(pitch_um > 0.0, "register_grid: pitch must be positive");
  GridRegistration reg;
  reg.pitch_um = pitch_um;

  double theta = 0.0;
  if (detail::collinear(spots, pitch_um)) {
    reg.warnings.push_back("spots are collinear: rotation fixed to 0");
  } else if (auto th = detail::bond_orientation(spots, pitch_um)) {
    theta = *th;
  } else {
    reg.warnings.push_back("no nearest-neighbour pairs at the lattice pitch: rotation fixed to 0");
  }
  const bool rotation_locked = !reg.warnings.empty();

  // Lattice offset: circular mean of the fractional coordinates.
  auto frame = [&](const SpotPosition& s, double th) {
    const double c = std::cos(th);
    const double sn = std::sin(th);
    return std::pair{(c * s.x_um + sn * s.y_um) / pitch_um, (-sn * s.x_um + c * s.y_um) / pitch_um};
  };
  std::complex<double> fu = 0.0;
  std::complex<double> fv = 0.0;
  for (const auto& s : spots) {
    const auto [u, v] = frame(s, theta);
    fu += std::polar(1.0, 2.0 * std::numbers::pi * u);
    fv += std::polar(1.0, 2.0 * std::numbers::pi * v);
  }
  const double off_u = std::arg(fu) / (2.0 * std::numbers::pi);
  const double off_v = std::arg(fv) / (2.0 * std::numbers::pi);
  {
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    reg.origin_x_um = pitch_um * (c * off_u - sn * off_v);
    reg.origin_y_um = pitch_um * (sn * off_u + c * off_v);
  }
  reg.rotation_deg = theta * 180.0 / std::numbers::pi;

  std::vector<std::pair<long, long>> idx(spots.size());
  auto assign = [&] {
    const double th = reg.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th);
    const double sn = std::sin(th);
    for (std::size_t k = 0; k < spots.size(); ++k) {
      const double dx = spots[k].x_um - reg.origin_x_um;
      const double dy = spots[k].y_um - reg.origin_y_um;
      idx[k] = {std::lround((c * dx + sn * dy) / pitch_um), std::lround((-sn * dx + c * dy) / pitch_um)};
    }
  };

  for (int pass = 0; pass < options.refinement_passes; ++pass) {
    assign();
    // Fixed-scale Procrustes: rotation and translation mapping lattice
    // coordinates onto the spot positions.
    double qx = 0.0, qy = 0.0, px = 0.0, py = 0.0;
    for (std::size_t k = 0; k < spots.size(); ++k) {
      qx += pitch_um * static_cast<double>(idx[k].first);
      qy += pitch_um * static_cast<double>(idx[k].second);
      px += spots[k].x_um;
      py += spots[k].y_um;
    }
    const double n = static_cast<double>(spots.size());
    qx /= n;
    qy /= n;
    px /= n;
    py /= n;
    double th = reg.rotation_deg * std::numbers::pi / 180.0;
    if (!rotation_locked) {
      double cross = 0.0;
      double dot = 0.0;
      for (std::size_t k = 0; k < spots.size(); ++k) {
        const double ax = pitch_um * static_cast<double>(idx[k].first) - qx;
        const double ay = pitch_um * static_cast<double>(idx[k].second) - qy;
        const double bx = spots[k].x_um - px;
        const double by = spots[k].y_um - py;
        cross += ax * by - ay * bx;
        dot += ax * bx + ay * by;
      }
      th = std::atan2(cross, dot);
    }
    const double c = std::cos(th);
    const double sn = std::sin(th);
    reg.rotation_deg = th * 180.0 / std::numbers::pi;
    reg.origin_x_um = px - (c * qx - sn * qy);
    reg.origin_y_um = py - (sn * qx + c * qy);
  }
  assign();

  // Re-base indices so the first column and row are 0.
  long min_i = std::numeric_limits<long>::max();
  long min_j = std::numeric_limits<long>::max();
  long max_i = std::numeric_limits<long>::min();
  long max_j = std::numeric_limits<long>::min();
  for (const auto& [i, j] : idx) {
    min_i = std::min(min_i, i);
    min_j = std::min(min_j, j);
    max_i = std::max(max_i, i);
    max_j = std::max(max_j, j);
  }
  {
    const auto [ox, oy] = reg.node_position(static_cast<double>(min_i), static_cast<double>(min_j));
    reg.origin_x_um = ox;
    reg.origin_y_um = oy;
  }
  reg.columns = options.columns.value_or(static_cast<int>(max_i - min_i + 1));
  reg.rows = options.rows.value_or(static_cast<int>(max_j - min_j + 1));
  require(reg.columns > 0 && reg.rows > 0, "register_grid: lattice extent must be positive");

  reg.sites.resize(static_cast<std::size_t>(reg.columns) * static_cast<std::size_t>(reg.rows));
  for (int j = 0; j < reg.rows; ++j) {
    for (int i = 0; i < reg.columns; ++i) {
      SiteRecord& site = reg.sites[static_cast<std::size_t>(j) * reg.columns + i];
      site.i = i;
      site.j = j;
      const auto [x, y] = reg.node_position(i, j);
      site.x_um = x;
      site.y_um = y;
    }
  }

  // Nearest spot wins a contested node.
  std::map<std::pair<int, int>, std::size_t> owner;
  std::vector<double> dist(spots.size());
  reg.assignment.assign(spots.size(), {-1, -1});
  for (std::size_t k = 0; k < spots.size(); ++k) {
    const int i = static_cast<int>(idx[k].first - min_i);
    const int j = static_cast<int>(idx[k].second - min_j);
    const auto [nx, ny] = reg.node_position(i, j);
    dist[k] = std::hypot(spots[k].x_um - nx, spots[k].y_um - ny);
    if (i >= reg.columns || j >= reg.rows) {
      reg.warnings.push_back("spot outside the requested lattice extent dropped");
      continue;
    }
    auto [it, inserted] = owner.try_emplace({i, j}, k);
    if (!inserted) {
      reg.warnings.push_back("two spots share lattice node (" + std::to_string(i) + ", " + std::to_string(j) +
                             "): farther one dropped");
      if (dist[k] < dist[it->second]) {
        reg.assignment[it->second] = {-1, -1};
        it->second = k;
      } else {
        continue;
      }
    }
    reg.assignment[k] = {i, j};
  }

  double ss = 0.0;
  std::size_t used = 0;
  for (const auto& [node, k] : owner) {
    SiteRecord& site = reg.sites[static_cast<std::size_t>(node.second) * reg.columns + node.first];
    site.x_um = spots[k].x_um;
    site.y_um = spots[k].y_um;
    site.intensity = std::max(0.0, spots[k].intensity);
    site.detected = true;
    site.n_emitters = 1;
    ss += dist[k] * dist[k];
    ++used;
  }
  reg.residual_rms_um = used ? std::sqrt(ss / static_cast<double>(used)) : 0.0;
  return reg;
}

}  // namespace defect_foundry::scanstats
