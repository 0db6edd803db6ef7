#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "defect_foundry/core/timetag.hpp"
#include "defect_foundry/emitter/g2_oracle.hpp"
#include "defect_foundry/emitter/presets.hpp"
#include "defect_foundry/emitter/rates.hpp"
#include "defect_foundry/emitter/scan.hpp"
#include "defect_foundry/emitter/simulate.hpp"
#include "defect_foundry/emitter/traces.hpp"
#include "oracles.hpp"

using namespace defect_foundry;
using namespace defect_foundry::emitter;

namespace {
const EmitterRates kGeneric{0.08, 0.15, 0.012, 0.009};
}

TEST(SteadyState, TwoLevelSymmetry) {
  const auto occ = steady_state({0.3, 0.3, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(occ.ground, 0.5);
  EXPECT_DOUBLE_EQ(occ.excited, 0.5);
  EXPECT_DOUBLE_EQ(occ.shelved, 0.0);
}

TEST(SteadyState, StrongPumpLimit) {
  const auto occ = steady_state({1e9, 0.1, 0.0, 0.0});
  EXPECT_NEAR(occ.excited, 1.0, 1e-9);
}

TEST(SteadyState, AbsorbingShelfFlagged) {
  const auto occ = steady_state({0.1, 0.1, 0.01, 0.0});
  EXPECT_TRUE(occ.absorbing);
  EXPECT_EQ(occ.shelved, 1.0);
}

TEST(SteadyState, SumsToOneAndBalances) {
  const auto occ = steady_state(kGeneric);
  EXPECT_NEAR(occ.ground + occ.excited + occ.shelved, 1.0, 1e-15);
  // Flux balance into and out of each state.
  EXPECT_NEAR(kGeneric.k_exc * occ.ground, (kGeneric.k_em + kGeneric.k_isc) * occ.excited, 1e-15);
  EXPECT_NEAR(kGeneric.k_isc * occ.excited, kGeneric.k_des * occ.shelved, 1e-15);
}

TEST(SteadyState, MatchesMonteCarloTimeAverage) {
  const auto stats = simulate_trajectory(kGeneric, 1'000'000, {101, 0});
  const auto occ = steady_state(kGeneric);
  const double total = stats.total_time();
  EXPECT_NEAR(stats.time_ground / total, occ.ground, 1e-3 * 3);
  EXPECT_NEAR(stats.time_excited / total, occ.excited, 1e-3);
  EXPECT_NEAR(stats.time_shelved / total, occ.shelved, 1e-3 * 3);
}

TEST(Gillespie, ExcitedDwellsAreExponential) {
  const auto stats = simulate_trajectory(kGeneric, 300'000, {102, 0}, true);
  ASSERT_GE(stats.excited_dwells.size(), 100'000u);
  std::vector<double> dwells(stats.excited_dwells.begin(), stats.excited_dwells.begin() + 100'000);
  const double d = oracle::ks_exponential(dwells, kGeneric.k_em + kGeneric.k_isc);
  EXPECT_LT(d, oracle::ks_critical_001(dwells.size()));
}

TEST(G2Shape, ClosedFormMatchesEigenOracle) {
  const auto shape = g2_shape(kGeneric);
  const oracle::ThreeLevel ref{kGeneric.k_exc, kGeneric.k_em, kGeneric.k_isc, kGeneric.k_des};
  for (double t : {0.0, 0.5, 3.0, 17.0, 120.0, 900.0}) {
    EXPECT_NEAR(g2_closed_form(shape, t), ref.g2(t), 1e-12) << t;
  }
}

TEST(G2Oracle, ZeroDelayNormalizationAndAgreement) {
  const auto shape = g2_shape(kGeneric);
  const std::vector<double> taus{0.0, -2.0, 2.0, 10.0, 50.0, 100.0 * shape.tau2_ns};
  const auto g = g2_oracle(kGeneric, taus);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], g[2], 1e-15);
  EXPECT_NEAR(g.back(), 1.0, 1e-6);
  const oracle::ThreeLevel ref{kGeneric.k_exc, kGeneric.k_em, kGeneric.k_isc, kGeneric.k_des};
  for (std::size_t i = 0; i < taus.size(); ++i) EXPECT_NEAR(g[i], ref.g2(taus[i]), 1e-8);
}

TEST(G2Oracle, BoundedAndConvergesBeyondSlowScale) {
  const auto shape = g2_shape(kGeneric);
  std::vector<double> taus;
  for (double t = 0.0; t <= 40.0 * shape.tau2_ns; t += shape.tau2_ns / 20.0) taus.push_back(t);
  const auto g = g2_oracle(kGeneric, taus);
  double prev_dev = 1e9;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    EXPECT_GE(g[i], 0.0);
    EXPECT_LE(g[i], 1.0 + shape.a + 1e-12);
    if (taus[i] > 10.0 * shape.tau2_ns) {
      const double dev = std::fabs(g[i] - 1.0);
      EXPECT_LE(dev, prev_dev + 1e-15);
      prev_dev = dev;
    }
  }
}

TEST(RatesFromShape, InvertsClosedForm) {
  for (const auto& preset : g2_presets()) {
    const EmitterRates r = preset.rates();
    const auto shape = g2_shape(r);
    EXPECT_NEAR(shape.a, preset.shape.a, 1e-9) << preset.name;
    EXPECT_NEAR(shape.tau1_ns, preset.shape.tau1_ns, 1e-9) << preset.name;
    EXPECT_NEAR(shape.tau2_ns, preset.shape.tau2_ns, 1e-7) << preset.name;
    EXPECT_NEAR(saturation_parameter(r), preset.power_mw / kSaturationPowerMw, 1e-9) << preset.name;
  }
  EXPECT_THROW(rates_from_g2_shape({0.0, 5.0, 50.0}, 1.0), InputError);
}

TEST(Presets, SaturationCurveConstants) {
  const auto p = saturation_preset();
  EXPECT_NEAR(p.model.saturation_power_mw(), kSaturationPowerMw, 1e-12);
  EXPECT_NEAR(p.model.saturated_emission_cps() * p.detection.efficiency, kSaturationRateCps, 1e-6);
  // I(P) = I_s P / (P + P0) from the rate equations.
  for (double mw : {0.1, 0.43, 2.0}) {
    const double detected = emission_rate_cps(p.model.at(mw)) * p.detection.efficiency;
    EXPECT_NEAR(detected, kSaturationRateCps * mw / (mw + kSaturationPowerMw), 1e-6);
  }
}

TEST(Simulate, DarkEmitterGivesOnlyBackground) {
  DetectionModel det{1.0, 20000.0, 0.3};
  const auto pair = simulate_stream({0.0, 0.1, 0.0, 0.0}, det, 1.0, {5, 0});
  const double n0 = static_cast<double>(pair.ch0.size());
  const double n1 = static_cast<double>(pair.ch1.size());
  EXPECT_NEAR(n0, 6000.0, 3.0 * std::sqrt(6000.0));
  EXPECT_NEAR(n1, 14000.0, 3.0 * std::sqrt(14000.0));
}

TEST(Simulate, NoEfficiencyNoBackgroundIsEmpty) {
  const auto pair = simulate_stream(kGeneric, {0.0, 0.0, 0.5}, 0.5, {6, 0});
  EXPECT_TRUE(pair.ch0.empty());
  EXPECT_TRUE(pair.ch1.empty());
  const auto zero = simulate_stream({0.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.5}, 0.5, {6, 0});
  EXPECT_TRUE(zero.ch0.empty());
  EXPECT_THROW(simulate_stream(kGeneric, {}, -1.0, {6, 0}), InputError);
}

TEST(Simulate, DetectedRateMatchesSteadyState) {
  const auto p = saturation_preset();
  const EmitterRates r = p.model.at(4.0);
  const double expected = emission_rate_cps(r) * p.detection.efficiency;
  // Gillespie steps every transition, so it gets the shorter run.
  for (auto [method, seconds] : {std::pair{SimulationMethod::aggregated, 10.0}, std::pair{SimulationMethod::gillespie, 1.0}}) {
    const auto pair = simulate_stream(r, p.detection, seconds, {7, 0}, {method});
    const double total = count_rate(pair.ch0) + count_rate(pair.ch1);
    EXPECT_NEAR(total, expected, 0.05 * expected);
    EXPECT_NEAR(total * seconds, expected * seconds, 4.0 * std::sqrt(expected * seconds));
  }
}

TEST(Simulate, SortedDeterministicAndSeedSensitive) {
  DetectionModel det{0.05, 5000.0, 0.5};
  const auto a = simulate_stream(kGeneric, det, 0.2, {8, 1});
  const auto b = simulate_stream(kGeneric, det, 0.2, {8, 1});
  const auto c = simulate_stream(kGeneric, det, 0.2, {9, 1});
  EXPECT_EQ(a.ch0, b.ch0);
  EXPECT_EQ(a.ch1, b.ch1);
  EXPECT_NE(a.ch0.tags(), c.ch0.tags());
  EXPECT_TRUE(std::is_sorted(a.ch0.tags().begin(), a.ch0.tags().end(), tag_less));
  for (const auto& t : a.ch0.tags()) EXPECT_EQ(t.channel, 0);
  for (const auto& t : a.ch1.tags()) EXPECT_EQ(t.channel, 1);
}

TEST(Scan, BackgroundOnly) {
  ScanSpec spec;
  spec.site_rates = {0.0};
  spec.background = 25.0;
  const Image img = synth_scan(spec, {11, 0});
  const double m = oracle::mean(img.pixels);
  EXPECT_NEAR(m, 25.0, 3.0 * std::sqrt(25.0 / img.pixels.size()));
}

TEST(Scan, SingleSiteMoments) {
  ScanSpec spec;
  spec.extent_um = 2.0;
  spec.spacing_um = 2.0;
  spec.background = 0.0;
  spec.site_rates = {20000.0};
  const Image img = synth_scan(spec, {12, 0});
  double total = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double v = img.at(x, y);
      total += v;
      cx += v * (x + 0.5) * spec.pixel_um;
      cy += v * (y + 0.5) * spec.pixel_um;
    }
  }
  EXPECT_NEAR(total, 20000.0, 3.0 * std::sqrt(20000.0));
  const double tol = 3.0 * std::hypot(spec.psf_sigma_um, spec.pixel_um / std::sqrt(12.0)) / std::sqrt(total);
  EXPECT_NEAR(cx / total, 1.0, tol);
  EXPECT_NEAR(cy / total, 1.0, tol);
}

TEST(Scan, RejectsBadGeometry) {
  ScanSpec spec;
  spec.pixel_um = 0.0;
  EXPECT_THROW(expected_scan(spec), InputError);
  ScanSpec rates;
  rates.site_rates = {1.0, 2.0};
  EXPECT_THROW(expected_scan(rates), InputError);
}

TEST(Traces, PoissonAndTelegraphMeans) {
  const auto p = poisson_trace(7400.0, 100.0, 600, {13, 0});
  EXPECT_NEAR(oracle::mean(p), 740.0, 3.0 * std::sqrt(740.0 / 600.0));
  const auto t = telegraph_trace(1000.0, 5000.0, 2.0, 100.0, 600, {13, 1});
  EXPECT_NEAR(t[5], 100.0, 50.0);   // first 2 s low
  EXPECT_NEAR(t[25], 500.0, 100.0);  // next 2 s high
}
