#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/image.hpp"

namespace defect_foundry::scanstats {

/// Detected spot. Coordinates are in pixel units with pixel (x, y) centred
/// at (x, y); to_um maps them onto the scan frame.
struct Spot {
  double x_px = 0.0;
  double y_px = 0.0;
  double intensity = 0.0;  // background-subtracted sum over the 5x5 window
  double peak = 0.0;       // raw value of the local maximum

  [[nodiscard]] double x_um(double pixel_um) const { return (x_px + 0.5) * pixel_um; }
  [[nodiscard]] double y_um(double pixel_um) const { return (y_px + 0.5) * pixel_um; }
};

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

/// Local maxima above median + snr_threshold * sqrt(median), refined by a
/// background-subtracted centroid over the surrounding 5x5 pixels.
///
/// A pixel is a maximum when it beats every pixel within min_sep (Euclidean,
/// in pixels); plateaus resolve to their first pixel in raster order. A zero
/// background uses sqrt(1) as the noise scale.
inline std::vector<Spot> detect_spots(const Image& img, double min_sep_px = 5.0, double snr_threshold = 5.0) {
  img.validate();
  require(min_sep_px >= 1.0, "detect_spots: min_sep must be at least one pixel");
  const double bg = median(img.pixels);
  const double threshold = bg + snr_threshold * std::sqrt(std::max(bg, 1.0));
  const auto r = static_cast<long>(std::floor(min_sep_px));
  const auto w = static_cast<long>(img.width);
  const auto h = static_cast<long>(img.height);

  std::vector<Spot> spots;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double v = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      if (v <= threshold) continue;
      bool is_max = true;
      for (long dy = -r; dy <= r && is_max; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (static_cast<double>(dx * dx + dy * dy) > min_sep_px * min_sep_px) continue;
          const long xx = x + dx;
          const long yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double u = img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (earlier ? u >= v : u > v) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;

      double sw = 0.0;
      double sx = 0.0;
      double sy = 0.0;
      double total = 0.0;
      for (long dy = -2; dy <= 2; ++dy) {
        for (long dx = -2; dx <= 2; ++dx) {
          const long xx = x + dx;
          const long yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double excess = img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy)) - bg;
          total += excess;
          const double wt = std::max(excess, 0.0);
          sw += wt;
          sx += wt * static_cast<double>(xx);
          sy += wt * static_cast<double>(yy);
        }
      }
      Spot s;
      s.x_px = sw > 0.0 ? sx / sw : static_cast<double>(x);
      s.y_px = sw > 0.0 ? sy / sw : static_cast<double>(y);
      s.intensity = std::max(total, 0.0);
      s.peak = v;
      spots.push_back(s);
    }
  }
  return spots;
}

}  // namespace defect_foundry::scanstats
