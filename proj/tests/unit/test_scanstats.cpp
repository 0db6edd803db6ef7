#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "defect_foundry/emitter/scan.hpp"
#include "defect_foundry/emitter/traces.hpp"
#include "defect_foundry/scanstats/depth.hpp"
#include "defect_foundry/scanstats/grid.hpp"
#include "defect_foundry/scanstats/photostability.hpp"
#include "defect_foundry/scanstats/saturation.hpp"
#include "defect_foundry/scanstats/site.hpp"
#include "defect_foundry/scanstats/spots.hpp"
#include "defect_foundry/scanstats/yield.hpp"
#include "oracles.hpp"

using namespace defect_foundry;
using namespace defect_foundry::scanstats;

namespace {

std::vector<SpotPosition> lattice_points(int n, double pitch, double rot_deg, double ox, double oy) {
  const double th = rot_deg * std::numbers::pi / 180.0;
  std::vector<SpotPosition> out;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double u = pitch * i;
      const double v = pitch * j;
      out.push_back({ox + std::cos(th) * u - std::sin(th) * v, oy + std::sin(th) * u + std::cos(th) * v, 1.0});
    }
  }
  return out;
}

// Number of detections within `tol` of a true site, and of detections matching none.
std::pair<int, int> match_sites(const std::vector<Spot>& spots, const std::vector<emitter::SitePosition>& truth,
                                double pixel_um, double tol_um) {
  int hits = 0;
  std::vector<bool> used(spots.size(), false);
  for (const auto& t : truth) {
    for (std::size_t k = 0; k < spots.size(); ++k) {
      if (!used[k] && std::hypot(spots[k].x_um(pixel_um) - t.x_um, spots[k].y_um(pixel_um) - t.y_um) < tol_um) {
        used[k] = true;
        ++hits;
        break;
      }
    }
  }
  return {hits, static_cast<int>(std::count(used.begin(), used.end(), false))};
}

}  // namespace

// ------------------------------------------------------------------ spots

TEST(Spots, FlatImageHasNoSpots) {
  emitter::ScanSpec spec;
  spec.site_rates = {0.0};
  spec.background = 50.0;
  const Image img = emitter::synth_scan(spec, {7, 0});
  EXPECT_TRUE(detect_spots(img, 5.0, 5.0).empty());
  EXPECT_TRUE(detect_spots(Image(10, 10, 0.0)).empty());
}

TEST(Spots, SingleSpotAtFourToOne) {
  // Peak pixel excess four times the background level.
  emitter::ScanSpec spec;
  spec.extent_um = 2.0;
  spec.spacing_um = 2.0;
  spec.background = 100.0;
  const double peak_fraction = std::pow(std::erf(0.05 / (std::numbers::sqrt2 * spec.psf_sigma_um)), 2);
  spec.site_rates = {400.0 / peak_fraction};
  const auto truth = spec.sites();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spots = detect_spots(emitter::synth_scan(spec, {seed, 0}));
    ASSERT_EQ(spots.size(), 1U) << "seed " << seed;
    EXPECT_LT(std::hypot(spots[0].x_um(spec.pixel_um) - truth[0].x_um, spots[0].y_um(spec.pixel_um) - truth[0].y_um),
              spec.pixel_um);
  }
}

TEST(Spots, RotatedGridRecall) {
  emitter::ScanSpec spec;
  spec.rotation_deg = 3.0;
  const auto truth = spec.sites();
  ASSERT_EQ(truth.size(), 64U);
  const auto spots = detect_spots(emitter::synth_scan(spec, {11, 0}));
  const auto [hits, false_pos] = match_sites(spots, truth, spec.pixel_um, 0.3);
  EXPECT_GE(hits, 63);
  EXPECT_EQ(false_pos, 0);
}

TEST(Spots, TranslationEquivariant) {
  emitter::ScanSpec spec;
  spec.extent_um = 6.0;
  const Image img = emitter::synth_scan(spec, {3, 0});
  const auto base = detect_spots(img);
  ASSERT_FALSE(base.empty());
  for (int k : {1, 4, 7}) {
    // Cyclic shift keeps the pixel multiset, hence the background estimate.
    Image wrapped(img.width, img.height);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) wrapped.at((x + k) % img.width, (y + k) % img.height) = img.at(x, y);
    const auto moved = detect_spots(wrapped);
    // Only spots whose neighbourhood stays clear of the image edge in both frames.
    const double margin = 6.0;
    const double far = static_cast<double>(img.width) - margin - k;
    int compared = 0;
    for (const auto& s : base) {
      if (s.x_px < margin || s.y_px < margin || s.x_px > far || s.y_px > far) continue;
      ++compared;
      const bool found = std::any_of(moved.begin(), moved.end(), [&](const Spot& m) {
        return std::fabs(m.x_px - s.x_px - k) < 1e-9 && std::fabs(m.y_px - s.y_px - k) < 1e-9 &&
               std::fabs(m.intensity - s.intensity) < 1e-9;
      });
      EXPECT_TRUE(found) << "shift " << k;
    }
    EXPECT_GE(compared, 4);
  }
}

TEST(Spots, CentroidAndIntensityOfIsolatedPeak) {
  Image img(21, 21, 2.0);
  img.at(10, 10) = 102.0;
  img.at(11, 10) = 52.0;
  const auto spots = detect_spots(img);
  ASSERT_EQ(spots.size(), 1U);
  EXPECT_NEAR(spots[0].x_px, (10.0 * 100 + 11.0 * 50) / 150.0, 1e-12);
  EXPECT_NEAR(spots[0].y_px, 10.0, 1e-12);
  EXPECT_NEAR(spots[0].intensity, 150.0, 1e-12);
  EXPECT_EQ(spots[0].peak, 102.0);
}

TEST(Spots, PlateauYieldsOneSpot) {
  Image img(15, 15, 0.0);
  img.at(7, 7) = 50.0;
  img.at(8, 7) = 50.0;
  const auto spots = detect_spots(img);
  ASSERT_EQ(spots.size(), 1U);
  EXPECT_NEAR(spots[0].x_px, 7.5, 1e-12);
}

// ------------------------------------------------------------------ grid

TEST(Grid, ExactGridHasZeroResidual) {
  const auto pts = lattice_points(8, 2.0, 0.0, 1.0, 1.0);
  const auto reg = register_grid(pts, 2.0);
  EXPECT_NEAR(reg.residual_rms_um, 0.0, 1e-9);
  EXPECT_NEAR(reg.rotation_deg, 0.0, 1e-9);
  EXPECT_NEAR(reg.origin_x_um, 1.0, 1e-9);
  EXPECT_NEAR(reg.origin_y_um, 1.0, 1e-9);
  EXPECT_EQ(reg.columns, 8);
  EXPECT_EQ(reg.rows, 8);
  EXPECT_TRUE(reg.warnings.empty());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_EQ(reg.assignment[k], std::make_pair(static_cast<int>(k % 8), static_cast<int>(k / 8)));
  }
}

TEST(Grid, RecoversRotation) {
  for (double rot : {3.0, -3.0, 12.5}) {
    const auto pts = lattice_points(8, 2.0, rot, 0.7, -0.4);
    const auto reg = register_grid(pts, 2.0);
    EXPECT_NEAR(reg.rotation_deg, rot, 0.1);
    EXPECT_NEAR(reg.residual_rms_um, 0.0, 1e-9);
  }
}

TEST(Grid, RotationFromSynthesizedScan) {
  emitter::ScanSpec spec;
  spec.rotation_deg = 3.0;
  const auto spots = detect_spots(emitter::synth_scan(spec, {5, 0}));
  std::vector<SpotPosition> pos;
  for (const auto& s : spots) pos.push_back({s.x_um(spec.pixel_um), s.y_um(spec.pixel_um), s.intensity});
  const auto reg = register_grid(pos, spec.spacing_um);
  EXPECT_NEAR(reg.rotation_deg, 3.0, 0.1);
  EXPECT_EQ(reg.columns * reg.rows, 64);
}

TEST(Grid, MissingSpotsStillAssigned) {
  auto pts = lattice_points(10, 2.0, 3.0, 0.5, 0.5);
  Rng rng({9, 0});
  std::vector<SpotPosition> kept;
  std::vector<std::pair<int, int>> truth;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    // One missing spot per row; the corners stay so the lattice extent is pinned.
    if (k % 10 == (3 * (k / 10) + 1) % 10) continue;
    // Sub-pixel jitter.
    kept.push_back({pts[k].x_um + 0.03 * rng.normal(), pts[k].y_um + 0.03 * rng.normal(), 1.0});
    truth.emplace_back(static_cast<int>(k % 10), static_cast<int>(k / 10));
  }
  ASSERT_EQ(kept.size(), 90U);
  const auto reg = register_grid(kept, 2.0);
  ASSERT_EQ(reg.assignment.size(), kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) EXPECT_EQ(reg.assignment[k], truth[k]);
  EXPECT_EQ(reg.sites.size(), 100U);
  const auto undetected = std::count_if(reg.sites.begin(), reg.sites.end(), [](const SiteRecord& s) {
    return !s.detected && s.n_emitters == 0;
  });
  EXPECT_EQ(static_cast<std::size_t>(undetected), 100 - kept.size());
  EXPECT_NEAR(reg.rotation_deg, 3.0, 0.1);
}

TEST(Grid, ResidualInvariantUnderRelabeling) {
  auto pts = lattice_points(6, 2.0, 2.0, 0.0, 0.0);
  Rng rng({4, 0});
  for (auto& p : pts) {
    p.x_um += 0.05 * rng.normal();
    p.y_um += 0.05 * rng.normal();
  }
  const auto a = register_grid(pts, 2.0);
  std::vector<SpotPosition> shuffled = pts;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());
  const auto b = register_grid(shuffled, 2.0);
  EXPECT_NEAR(a.residual_rms_um, b.residual_rms_um, 1e-9);
  EXPECT_NEAR(a.rotation_deg, b.rotation_deg, 1e-9);
}

TEST(Grid, CollinearWarns) {
  std::vector<SpotPosition> pts{{0, 0, 1}, {2, 0, 1}, {4, 0, 1}, {6, 0, 1}};
  const auto reg = register_grid(pts, 2.0);
  EXPECT_EQ(reg.rotation_deg, 0.0);
  ASSERT_FALSE(reg.warnings.empty());
  EXPECT_NE(reg.warnings[0].find("collinear"), std::string::npos);
  EXPECT_EQ(reg.columns, 4);
  EXPECT_EQ(reg.rows, 1);
}

TEST(Grid, RejectsTooFewSpots) {
  std::vector<SpotPosition> pts{{0, 0, 1}, {2, 0, 1}};
  EXPECT_THROW(register_grid(pts, 2.0), InputError);
}

TEST(Grid, ClassifySitesUsesReference) {
  std::vector<SiteRecord> sites(3);
  sites[0].detected = true;
  sites[0].intensity = 100.0;
  sites[1].detected = true;
  sites[1].intensity = 210.0;
  sites[2].intensity = 500.0;  // not detected
  classify_sites(sites, 100.0);
  EXPECT_EQ(sites[0].n_emitters, 1);
  EXPECT_EQ(sites[1].n_emitters, 2);
  EXPECT_EQ(sites[2].n_emitters, 0);
}

// ------------------------------------------------------------------ saturation

namespace {
std::vector<SaturationPoint> saturation_curve(double is, double p0, std::vector<double> powers) {
  std::vector<SaturationPoint> pts;
  for (double p : powers) pts.push_back({p, is * p / (p + p0)});
  return pts;
}
}  // namespace

TEST(Saturation, NoiselessRecovery) {
  const auto pts = saturation_curve(7400.0, 0.43, {0.05, 0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.0});
  const auto fit = fit_saturation(pts);
  EXPECT_TRUE(fit.fit.converged);
  EXPECT_NEAR(fit.I_s / 7400.0, 1.0, 1e-6);
  EXPECT_NEAR(fit.P0 / 0.43, 1.0, 1e-6);
  EXPECT_NEAR(fit.rate_at(fit.P0), 0.5 * fit.I_s, 1e-9 * fit.I_s);
}

TEST(Saturation, OrderInvariant) {
  auto pts = saturation_curve(7400.0, 0.43, {0.05, 0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.0});
  Rng rng({1, 0});
  for (auto& p : pts) p.rate_cps *= 1.0 + 0.05 * rng.normal();
  const auto a = fit_saturation(pts);
  std::reverse(pts.begin(), pts.end());
  std::swap(pts[1], pts[5]);
  const auto b = fit_saturation(pts);
  EXPECT_EQ(a.I_s, b.I_s);
  EXPECT_EQ(a.P0, b.P0);
}

TEST(Saturation, MultiplicativeNoiseStudy) {
  // Eight powers log-spaced over P0/20 .. 20 P0; relative weighting matches the noise model.
  const auto powers = log_spaced_powers(0.43 / 20.0, 0.43 * 20.0, 8);
  std::vector<double> err_is;
  std::vector<double> err_p0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto pts = saturation_curve(7400.0, 0.43, powers);
    Rng rng({2024, trial});
    for (auto& p : pts) p.rate_cps *= 1.0 + 0.05 * rng.normal();
    const auto fit = fit_saturation(pts, SaturationWeighting::relative);
    err_is.push_back(std::fabs(fit.I_s / 7400.0 - 1.0));
    err_p0.push_back(std::fabs(fit.P0 / 0.43 - 1.0));
  }
  EXPECT_LT(oracle::quantile(err_is, 0.9), 0.10);
  EXPECT_LT(oracle::quantile(err_p0, 0.9), 0.10);
}

TEST(Saturation, LogSpacedPowers) {
  const auto p = log_spaced_powers(0.1, 10.0, 3);
  ASSERT_EQ(p.size(), 3U);
  EXPECT_DOUBLE_EQ(p[0], 0.1);
  EXPECT_NEAR(p[1], 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(p[2], 10.0);
}

TEST(Saturation, NeedsThreeDistinctPowers) {
  std::vector<SaturationPoint> pts{{0.1, 10}, {0.1, 11}, {0.5, 20}, {0.5, 21}};
  EXPECT_THROW(fit_saturation(pts), InputError);
  std::vector<SaturationPoint> neg{{-0.1, 10}, {0.2, 11}, {0.5, 20}};
  EXPECT_THROW(fit_saturation(neg), InputError);
}

// ------------------------------------------------------------------ photostability

TEST(Photostability, PoissonTraceIsStable) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto trace = emitter::poisson_trace(7000.0, 100.0, 600, {seed, 0});
    const auto rep = photostability(trace, 100.0);
    EXPECT_NEAR(rep.fano, 1.0, 0.2);
    EXPECT_NEAR(rep.mean_rate_cps, 7000.0, 7000.0 * 0.01);
    EXPECT_FALSE(rep.blinking) << "seed " << seed << " dBIC " << rep.delta_bic;
  }
}

TEST(Photostability, TelegraphTraceBlinks) {
  const auto trace = emitter::telegraph_trace(1000.0, 5000.0, 2.0, 100.0, 600, {3, 0});
  const auto rep = photostability(trace, 100.0);
  EXPECT_TRUE(rep.blinking);
  EXPECT_GT(rep.fano, 10.0);
  EXPECT_NEAR(rep.mean_low, 100.0, 10.0);
  EXPECT_NEAR(rep.mean_high, 500.0, 20.0);
  EXPECT_NEAR(rep.weight_high, 0.5, 0.05);
}

TEST(Photostability, LowCountTraceIsStable) {
  const auto trace = emitter::poisson_trace(30.0, 100.0, 1000, {8, 0});
  EXPECT_FALSE(photostability(trace, 100.0).blinking);
}

TEST(Photostability, RejectsShortTrace) {
  std::vector<double> trace(99, 5.0);
  EXPECT_THROW(photostability(trace, 100.0), InputError);
}

// ------------------------------------------------------------------ yield

TEST(Yield, FluenceArithmetic) {
  EXPECT_NEAR(ions_per_aperture(2.6e11, 65.0), 8.6275, 1e-3);
  EXPECT_NEAR(ions_per_aperture(2.6e11, 130.0), 4.0 * ions_per_aperture(2.6e11, 65.0), 1e-12);
  EXPECT_EQ(ions_per_aperture(0.0, 65.0), 0.0);
  const auto iv = ions_per_aperture_interval(2.6e11, 65.0);
  EXPECT_LT(iv.low, iv.mean);
  EXPECT_GT(iv.high, iv.mean);
  EXPECT_NEAR(iv.low, ions_per_aperture(2.6e11, 55.0), 1e-12);
  EXPECT_NEAR(lateral_uncertainty_nm(60.0, 40.0), 50.0, 1e-12);
}

TEST(Yield, ConversionFromMeanCount) {
  // 100 sites with mean 1.61.
  std::vector<std::uint64_t> counts(100, 1);
  for (int k = 0; k < 61; ++k) counts[k] = 2;
  const auto rep = yield_report(counts, 8.6);
  EXPECT_NEAR(rep.lambda_hat, 1.61, 1e-12);
  EXPECT_NEAR(rep.conversion_yield, 0.187, 1e-3);
  const auto half = yield_report(counts, 17.2);
  EXPECT_NEAR(half.conversion_yield * 2.0, rep.conversion_yield, 1e-15);
}

TEST(Yield, AllSingles) {
  std::vector<SiteRecord> sites(20);
  for (auto& s : sites) s.n_emitters = 1;
  const auto rep = yield_report(sites, 8.63);
  EXPECT_EQ(rep.single_fraction, 1.0);
  EXPECT_EQ(rep.lambda_hat, 1.0);
  EXPECT_FALSE(rep.truncated.has_value());
  EXPECT_EQ(rep.single_fraction_nonzero, 1.0);
}

TEST(Yield, PoissonSampleMatchesClosedForm) {
  const double lam = 1.61;
  Rng rng({161, 0});
  std::vector<std::uint64_t> counts(10000);
  for (auto& c : counts) c = rng.poisson(lam);
  const auto rep = yield_report(counts, 8.63);
  const double n = 10000.0;
  EXPECT_NEAR(rep.lambda_hat, lam, 3.0 * std::sqrt(lam / n));

  const double p1 = oracle::poisson_pmf(1, lam);
  EXPECT_NEAR(p1, 0.322, 1e-3);
  EXPECT_NEAR(rep.single_fraction, p1, 3.0 * std::sqrt(p1 * (1 - p1) / n));

  const double q1 = p1 / (1.0 - std::exp(-lam));
  EXPECT_NEAR(q1, 0.402, 1e-3);
  const double nz = static_cast<double>(rep.n_nonzero);
  EXPECT_NEAR(rep.single_fraction_nonzero, q1, 3.0 * std::sqrt(q1 * (1 - q1) / nz));
  ASSERT_TRUE(rep.truncated.has_value());
  EXPECT_NEAR(rep.truncated->lambda_hat, lam, 3.0 * rep.truncated->std_error);
  EXPECT_NEAR(rep.model_single, oracle::poisson_pmf(1, rep.lambda_hat), 1e-12);
}

TEST(Yield, PermutationInvariant) {
  Rng rng({5, 0});
  std::vector<std::uint64_t> counts(500);
  for (auto& c : counts) c = rng.poisson(1.3);
  const auto a = yield_report(counts, 8.63);
  std::reverse(counts.begin(), counts.end());
  std::rotate(counts.begin(), counts.begin() + 123, counts.end());
  const auto b = yield_report(counts, 8.63);
  EXPECT_EQ(a.lambda_hat, b.lambda_hat);
  EXPECT_EQ(a.single_fraction, b.single_fraction);
  EXPECT_EQ(a.histogram, b.histogram);
}

TEST(Yield, RejectsEmpty) {
  std::vector<std::uint64_t> none;
  EXPECT_THROW(yield_report(none, 8.6), InputError);
}

// ------------------------------------------------------------------ depth

TEST(Depth, DeltaProfile) {
  const auto d = depth_stats({{41.0, 0.0}, {42.0, 3.0}, {43.0, 0.0}});
  EXPECT_DOUBLE_EQ(d.mean_depth_nm, 42.0);
  EXPECT_DOUBLE_EQ(d.straggle_nm, 0.0);
}

TEST(Depth, TruncatedGaussianMatchesClosedForm) {
  std::vector<std::pair<double, double>> prof;
  for (int z = 0; z <= 400; ++z) {
    const double x = (z - 42.0) / 35.0;
    prof.emplace_back(z, std::exp(-0.5 * x * x));
  }
  const auto d = depth_stats(prof);
  const auto m = oracle::truncated_normal_below(42.0, 35.0, 0.0);
  EXPECT_NEAR(d.mean_depth_nm, m.mean, 0.5);
  EXPECT_NEAR(d.straggle_nm, m.sd, 0.5);
}

TEST(Depth, UniformProfile) {
  std::vector<std::pair<double, double>> prof;
  for (int k = 0; k < 100000; ++k) prof.emplace_back((k + 0.5) * 1e-3, 1.0);
  const auto d = depth_stats(prof);
  EXPECT_NEAR(d.mean_depth_nm, 50.0, 1e-9);
  EXPECT_NEAR(d.straggle_nm, 100.0 / std::sqrt(12.0), 1e-6);
}

TEST(Depth, RejectsBadProfiles) {
  EXPECT_THROW(depth_stats({{1.0, 1.0}}), InputError);
  EXPECT_THROW(depth_stats({{1.0, 0.0}, {2.0, 0.0}}), InputError);
  EXPECT_THROW(depth_stats({{1.0, -1.0}, {2.0, 2.0}}), InputError);
}

TEST(Depth, ReadsCsv) {
  const auto dir = oracle::scratch_dir("depth_csv");
  const auto path = dir / "profile.csv";
  std::ofstream(path) << "depth_nm,weight\n10,1\n20,1\n30,2\n";
  const auto d = depth_stats(read_depth_profile(path));
  EXPECT_NEAR(d.mean_depth_nm, 22.5, 1e-12);
  std::ofstream(dir / "bad.csv") << "depth,weight\n10,1\n";
  EXPECT_THROW(read_depth_profile(dir / "bad.csv"), InputError);
}
