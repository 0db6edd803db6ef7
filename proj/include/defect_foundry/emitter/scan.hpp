#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/image.hpp"
#include "defect_foundry/core/rng.hpp"

namespace defect_foundry::emitter {

struct SitePosition {
  double x_um = 0.0;
  double y_um = 0.0;
};

/// Confocal raster of a square aperture lattice.
///
/// Nodes sit at ((i + 1/2) spacing, (j + 1/2) spacing) for every node that
/// fits in the extent, rotated by rotation_deg about the image centre. Node
/// (i, j) has expected integrated counts site_rates[j * n + i] (a single
/// entry is broadcast). Pixel (x, y) covers [x pixel, (x+1) pixel) in um.
struct ScanSpec {
  double extent_um = 16.0;
  double pixel_um = 0.1;
  double spacing_um = 2.0;
  double psf_sigma_um = 0.15;
  double rotation_deg = 0.0;
  std::vector<double> site_rates{1000.0};
  double background = 10.0;  // expected counts per pixel

  [[nodiscard]] std::size_t nodes_per_side() const {
    return static_cast<std::size_t>(std::floor(extent_um / spacing_um + 1e-9));
  }
  [[nodiscard]] std::size_t pixels_per_side() const {
    return static_cast<std::size_t>(std::llround(extent_um / pixel_um));
  }

  void validate() const {
    require(pixel_um > 0.0, "scan pixel size must be positive");
    require(extent_um > 0.0, "scan extent must be positive");
    require(spacing_um > 0.0, "lattice spacing must be positive");
    require(psf_sigma_um > 0.0, "PSF sigma must be positive");
    require(background >= 0.0, "background must be non-negative");
    const std::size_t n = nodes_per_side();
    require(site_rates.size() == 1 || site_rates.size() == n * n,
            "site_rates must have one entry or one per lattice node");
    for (double r : site_rates) require(r >= 0.0, "site rates must be non-negative");
    for (const SitePosition& s : sites()) {
      require(s.x_um >= 0.0 && s.x_um <= extent_um && s.y_um >= 0.0 && s.y_um <= extent_um,
              "lattice site falls outside the scan extent");
    }
  }

  [[nodiscard]] std::vector<SitePosition> sites() const {
    const std::size_t n = nodes_per_side();
    const double theta = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double mid = 0.5 * extent_um;
    std::vector<SitePosition> out;
    out.reserve(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        const double u = (static_cast<double>(i) + 0.5) * spacing_um - mid;
        const double v = (static_cast<double>(j) + 0.5) * spacing_um - mid;
        out.push_back({mid + c * u - s * v, mid + s * u + c * v});
      }
    }
    return out;
  }

  [[nodiscard]] double rate_of(std::size_t node) const {
    return site_rates.size() == 1 ? site_rates[0] : site_rates[node];
  }
};

/// Expected counts: background plus each site's rate times the Gaussian PSF
/// integrated over the pixel area.
inline Image expected_scan(const ScanSpec& spec) {
  spec.validate();
  const std::size_t n = spec.pixels_per_side();
  Image img(n, n, spec.background);
  const auto sites = spec.sites();
  const double inv = 1.0 / (std::numbers::sqrt2 * spec.psf_sigma_um);
  std::vector<double> wx(n);
  std::vector<double> wy(n);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const double rate = spec.rate_of(k);
    if (rate == 0.0) continue;
    for (std::size_t p = 0; p < n; ++p) {
      const double lo = static_cast<double>(p) * spec.pixel_um;
      const double hi = lo + spec.pixel_um;
      wx[p] = 0.5 * (std::erf((hi - sites[k].x_um) * inv) - std::erf((lo - sites[k].x_um) * inv));
      wy[p] = 0.5 * (std::erf((hi - sites[k].y_um) * inv) - std::erf((lo - sites[k].y_um) * inv));
    }
    for (std::size_t y = 0; y < n; ++y) {
      if (wy[y] < 1e-300) continue;
      for (std::size_t x = 0; x < n; ++x) img.at(x, y) += rate * wx[x] * wy[y];
    }
  }
  return img;
}

/// Poisson realization of expected_scan.
inline Image synth_scan(const ScanSpec& spec, RngSpec rng_spec) {
  Image img = expected_scan(spec);
  Rng rng(rng_spec);
  for (double& v : img.pixels) v = static_cast<double>(rng.poisson(v));
  return img;
}

}  // namespace defect_foundry::emitter
