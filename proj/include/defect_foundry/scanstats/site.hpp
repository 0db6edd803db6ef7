#pragma once

#include <optional>
#include <span>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/hbt/emitter_count.hpp"

namespace defect_foundry::scanstats {

/// One aperture of the implanted array.
struct SiteRecord {
  int i = 0;  // lattice column
  int j = 0;  // lattice row
  double x_um = 0.0;
  double y_um = 0.0;
  double intensity = 0.0;  // background-subtracted counts (or cps)
  std::optional<double> g2_zero;
  int n_emitters = 0;
  bool detected = false;

  void validate() const {
    require(intensity >= 0.0, "site intensity must be non-negative");
    require(n_emitters >= 0, "site emitter count must be non-negative");
  }
};

/// Fills n_emitters from intensity (and g2_zero when present) relative to a
/// single-emitter reference. Undetected sites stay at 0.
inline void classify_sites(std::span<SiteRecord> sites, double single_ref_intensity) {
  for (SiteRecord& s : sites) {
    s.n_emitters = s.detected ? hbt::estimate_emitter_count(s.g2_zero, s.intensity, single_ref_intensity) : 0;
  }
}

}  // namespace defect_foundry::scanstats
