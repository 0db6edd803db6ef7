#pragma once

#include <cstddef>
#include <vector>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry {

/// Row-major scalar image; (x, y) = (column, row), pixel (0, 0) is the
/// first row of the file.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  [[nodiscard]] bool empty() const { return pixels.empty(); }
  [[nodiscard]] double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  [[nodiscard]] double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  void validate() const {
    require(width > 0 && height > 0, "image must be nonempty");
    require(pixels.size() == width * height, "image pixel count does not match dimensions");
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace defect_foundry
