#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry {

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> std_errors;
  /// Row-major covariance, empty when the normal equations were singular.
  std::vector<double> covariance;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;

  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw InputError("unknown fit parameter: " + std::string(name));
  }
  [[nodiscard]] double value(std::string_view name) const { return params[index_of(name)]; }
  [[nodiscard]] double error(std::string_view name) const { return std_errors[index_of(name)]; }
};

}  // namespace defect_foundry
