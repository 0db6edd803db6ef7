#pragma once

#include <cmath>
#include <filesystem>
#include <utility>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/io.hpp"

namespace defect_foundry::scanstats {

struct DepthStats {
  double mean_depth_nm = 0.0;
  double straggle_nm = 0.0;  // weighted population standard deviation
  std::vector<std::pair<double, double>> profile;  // (depth_nm, weight)
};

inline DepthStats depth_stats(std::vector<std::pair<double, double>> profile) {
  require(profile.size() >= 2, "depth_stats: need at least 2 rows");
  double sw = 0.0;
  double sx = 0.0;
  for (const auto& [d, w] : profile) {
    require(std::isfinite(d) && d >= 0.0, "depth_stats: depths must be finite and >= 0");
    require(std::isfinite(w) && w >= 0.0, "depth_stats: weights must be finite and >= 0");
    sw += w;
    sx += w * d;
  }
  require(sw > 0.0, "depth_stats: total weight must be positive");
  DepthStats out;
  out.mean_depth_nm = sx / sw;
  double ss = 0.0;
  for (const auto& [d, w] : profile) ss += w * (d - out.mean_depth_nm) * (d - out.mean_depth_nm);
  out.straggle_nm = std::sqrt(ss / sw);
  out.profile = std::move(profile);
  return out;
}

inline std::vector<std::pair<double, double>> read_depth_profile(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path, {"depth_nm", "weight"});
  std::vector<std::pair<double, double>> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) rows.emplace_back(r[0], r[1]);
  return rows;
}

}  // namespace defect_foundry::scanstats
