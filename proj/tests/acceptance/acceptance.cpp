// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "defect_foundry/core/rng.hpp"
#include "defect_foundry/emitter/g2_oracle.hpp"
#include "defect_foundry/emitter/presets.hpp"
#include "defect_foundry/emitter/scan.hpp"
#include "defect_foundry/emitter/simulate.hpp"
#include "defect_foundry/emitter/traces.hpp"
#include "defect_foundry/hbt/correlate.hpp"
#include "defect_foundry/hbt/g2_fit.hpp"
#include "defect_foundry/numfit/poisson.hpp"
#include "defect_foundry/odmr/spin.hpp"
#include "defect_foundry/odmr/sweep.hpp"
#include "defect_foundry/scanstats/depth.hpp"
#include "defect_foundry/scanstats/grid.hpp"
#include "defect_foundry/scanstats/photostability.hpp"
#include "defect_foundry/scanstats/saturation.hpp"
#include "defect_foundry/scanstats/spots.hpp"
#include "defect_foundry/scanstats/yield.hpp"
#include "oracles.hpp"

using namespace defect_foundry;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "!") + what;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------- 1-3

Outcome fluence_arithmetic() {
  Outcome o;
  const double ions = scanstats::ions_per_aperture(2.6e11, 65.0);
  // pi r^2 with r = 32.5 nm = 3.25e-6 cm, done independently.
  const double ref = 2.6e11 * std::numbers::pi * 3.25e-6 * 3.25e-6;
  o.check(std::fabs(ions - 8.63) <= 0.05, fmt("ions/aperture %.4f (8.63 +- 0.05)", ions));
  o.check(std::fabs(ions - ref) <= 1e-12 * ref, fmt("matches F*pi*r^2 = %.6f", ref));
  return o;
}

Outcome yield_arithmetic() {
  Outcome o;
  // 100 sites with mean occupancy exactly 1.61.
  std::vector<std::uint64_t> n(100, 0);
  for (int k = 0; k < 100; ++k) n[k] = k < 39 ? 1 : (k < 61 ? 2 : (k < 85 ? 3 : (k < 86 ? 6 : 0)));
  const auto rep = scanstats::yield_report(std::span<const std::uint64_t>(n), 8.63);
  o.check(std::fabs(rep.lambda_hat - 1.61) < 1e-12, fmt("lambda_hat %.6f", rep.lambda_hat));
  o.check(std::fabs(rep.conversion_yield - 0.1866) <= 0.002, fmt("conversion %.5f (0.1866 +- 0.002)", rep.conversion_yield));
  return o;
}

Outcome poisson_statistics() {
  Outcome o;
  constexpr double kLambda = 1.61;
  constexpr std::size_t kN = 10000;
  Rng rng({20240, 3});
  std::vector<std::uint64_t> n(kN);
  for (auto& v : n) v = rng.poisson(kLambda);
  const auto fit = numfit::poisson_mle(n);
  o.check(std::fabs(fit.lambda_hat - kLambda) <= 3.0 * fit.std_error,
          fmt("lambda_hat %.4f +- %.4f", fit.lambda_hat, fit.std_error));

  const double p1 = oracle::poisson_pmf(1, kLambda);
  const double q1 = p1 / (1.0 - oracle::poisson_pmf(0, kLambda));
  o.check(std::fabs(p1 - 0.322) < 5e-4 && std::fabs(numfit::poisson_pmf(1, kLambda) - p1) < 1e-12,
          fmt("P(1) = %.4f", p1));
  o.check(std::fabs(q1 - 0.402) < 5e-4 && std::fabs(numfit::ztp_pmf(1, kLambda) - q1) < 1e-12,
          fmt("P(1|n>=1) = %.4f", q1));

  double ones = 0;
  double nonzero = 0;
  for (auto v : n) {
    ones += v == 1;
    nonzero += v > 0;
  }
  const double f1 = ones / kN;
  const double g1 = ones / nonzero;
  const double s1 = std::sqrt(p1 * (1 - p1) / kN);
  const double t1 = std::sqrt(q1 * (1 - q1) / nonzero);
  o.check(std::fabs(f1 - p1) <= 3 * s1, fmt("empirical P(1) %.4f +- %.4f", f1, s1));
  o.check(std::fabs(g1 - q1) <= 3 * t1, fmt("empirical P(1|n>=1) %.4f +- %.4f", g1, t1));
  o.check(0.41 > p1 && 0.41 < q1 + 3 * t1, "41% lies between the two estimates");
  return o;
}

// ---------------------------------------------------------------- 4-6

Outcome g2_round_trip() {
  Outcome o;
  for (const auto& preset : emitter::g2_presets()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pair = emitter::simulate_stream(preset.rates(), preset.detection(), preset.duration_s, {404, 0});
    const auto raw = hbt::correlate(pair.ch0, pair.ch1);
    const auto fit = hbt::fit_g2(raw, preset.rho);
    const double e1 = std::fabs(fit.tau1_ns / preset.shape.tau1_ns - 1.0);
    const double e2 = std::fabs(fit.tau2_ns / preset.shape.tau2_ns - 1.0);
    o.check(fit.fit.converged && e1 <= 0.10,
            preset.name + fmt(" tau1 %.2f ns (%.1f%%)", fit.tau1_ns, 100 * e1));
    o.check(fit.tau2_identifiable && e2 <= 0.15, fmt("tau2 %.1f ns (%.1f%%)", fit.tau2_ns, 100 * e2));
    o.check(fit.measured_g2_zero < 0.3, fmt("g2(0) %.3f +- %.3f", fit.measured_g2_zero, fit.measured_g2_zero_err));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(secs <= 60.0, fmt("%.1f s", secs));
  }
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  Rng pick({77, 0});
  auto log_uniform = [&](double lo, double hi) { return lo * std::pow(hi / lo, pick.uniform()); };
  const std::vector<long> grid_ns{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  std::vector<double> gl_x;
  std::vector<double> gl_w;
  oracle::gauss_legendre(8, gl_x, gl_w);
  int compared = 0;
  int within = 0;
  double worst = 0.0;
  for (int set = 0; set < 5; ++set) {
    emitter::EmitterRates r;
    r.k_exc = log_uniform(0.02, 0.3);
    r.k_em = log_uniform(0.05, 0.5);
    r.k_isc = log_uniform(0.002, 0.05);
    r.k_des = log_uniform(0.002, 0.05);
    const double eta = std::min(1.0, 4e5 / emitter::emission_rate_cps(r));
    const auto pair = emitter::simulate_stream(r, {eta, 0.0, 0.5}, 30.0, {500, static_cast<std::uint64_t>(set)});
    const auto h = hbt::correlate(pair.ch0, pair.ch1, 1000, 1'000'000);
    for (long t : grid_ns) {
      // Bin k covers [k - 1/2, k + 1/2) ns; average the oracle over it.
      std::vector<double> taus;
      for (double x : gl_x) taus.push_back(static_cast<double>(t) + 0.5 * x);
      const auto g = emitter::g2_oracle(r, taus);
      double expect = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) expect += 0.5 * gl_w[k] * g[k];
      const std::size_t idx = h.center_index() + static_cast<std::size_t>(t);
      const double sigma = std::sqrt(std::max<double>(1.0, static_cast<double>(h.raw_pairs[idx]))) / h.norm_factor;
      const double z = std::fabs(h.values[idx] - expect) / sigma;
      worst = std::max(worst, z);
      ++compared;
      within += z <= 3.0;
    }
  }
  o.check(within == compared, fmt("%.0f/%.0f points within 3 sigma, worst %.2f sigma", within, compared, worst));
  return o;
}

Outcome multi_emitter_law() {
  Outcome o;
  const auto preset = *emitter::find_g2_preset("paper-0.5mW");
  emitter::DetectionModel det = preset.detection();
  det.background_rate = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const std::vector<emitter::EmitterRates> em(static_cast<std::size_t>(n), preset.rates());
    const auto pair = emitter::simulate_emitters(em, det, 30.0, {600, static_cast<std::uint64_t>(n)});
    const auto h = hbt::correlate(pair.ch0, pair.ch1, 200, 500'000);
    const auto est = hbt::estimate_g2_zero(h, 1.0);
    const double want = 1.0 - 1.0 / n;
    o.check(est.fit.converged && std::fabs(est.g2_zero - want) <= 3.0 * est.std_error,
            fmt("n=%.0f g2(0) %.4f +- %.4f", n, est.g2_zero, est.std_error));
  }
  return o;
}

// ---------------------------------------------------------------- 7

Outcome saturation() {
  Outcome o;
  constexpr double kIs = 7400.0;
  constexpr double kP0 = 0.43;
  const auto powers = scanstats::log_spaced_powers(kP0 / 20.0, kP0 * 20.0, 8);
  auto curve = [&] {
    std::vector<scanstats::SaturationPoint> pts;
    for (double p : powers) pts.push_back({p, kIs / (1.0 + kP0 / p)});
    return pts;
  };
  for (auto w : {scanstats::SaturationWeighting::none, scanstats::SaturationWeighting::relative}) {
    const auto fit = scanstats::fit_saturation(curve(), w);
    o.check(std::fabs(fit.I_s / kIs - 1) <= 1e-6 && std::fabs(fit.P0 / kP0 - 1) <= 1e-6,
            fmt("noiseless I_s %.6g P0 %.6g", fit.I_s, fit.P0));
  }
  std::vector<double> e_is;
  std::vector<double> e_p0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto pts = curve();
    Rng rng({7007, seed});
    for (auto& p : pts) p.rate_cps *= 1.0 + 0.05 * rng.normal();
    const auto fit = scanstats::fit_saturation(pts, scanstats::SaturationWeighting::relative);
    e_is.push_back(std::fabs(fit.I_s / kIs - 1));
    e_p0.push_back(std::fabs(fit.P0 / kP0 - 1));
  }
  const double q_is = oracle::quantile(e_is, 0.9);
  const double q_p0 = oracle::quantile(e_p0, 0.9);
  o.check(q_is <= 0.10 && q_p0 <= 0.10, fmt("5%% noise, 90th pct error I_s %.1f%% P0 %.1f%%", 100 * q_is, 100 * q_p0));
  return o;
}

// ---------------------------------------------------------------- 8-9

Outcome odmr_physics() {
  Outcome o;
  odmr::SpinSystem sys;
  sys.D_mhz = 35.0;
  const auto f = odmr::numeric_transitions(sys);
  o.check(f.size() == 1 && std::fabs(f[0] - 70.0) <= 1e-9,
          fmt("B=0: %.0f line(s), first %.10f MHz", static_cast<double>(f.size()), f.empty() ? 0.0 : f[0]));
  // Allowed lines from the diagonalized Hamiltonian.
  auto outer = [&](double bz) {
    odmr::SpinSystem s = sys;
    s.B_gauss = {0.0, 0.0, bz};
    return odmr::numeric_transitions(s);
  };
  // Bz = 5..6 G keeps every level ordering fixed (crossings start near 25 G).
  const auto l5 = outer(5.0);
  const auto l6 = outer(6.0);
  const double gm = 2.0 * 1.39962449361;
  // The two lines near 2D move as 2D -+ g muB Bz.
  auto near70 = [](const std::vector<double>& l) {
    std::vector<double> out;
    for (double x : l)
      if (std::fabs(x - 70.0) < 30.0) out.push_back(x);
    return out;
  };
  const auto a = near70(l5);
  const auto b = near70(l6);
  if (a.size() != 2 || b.size() != 2) {
    o.check(false, "expected two lines near 2D");
    return o;
  }
  const double slope_lo = b[0] - a[0];
  const double slope_hi = b[1] - a[1];
  o.check(std::fabs(slope_lo + gm) <= 1e-6 && std::fabs(slope_hi - gm) <= 1e-6,
          fmt("slopes %.7f, %.7f MHz/G (closed form +-%.7f)", slope_lo, slope_hi, gm));
  o.check(std::fabs(gm - 2.80) < 0.01, "|slope| ~ 2.80 MHz/G");
  return o;
}

Outcome odmr_end_to_end() {
  Outcome o;
  odmr::SpinSystem sys;
  sys.D_mhz = 34.2;
  const odmr::SweepGrid grid{40.0, 100.0, 61};
  const odmr::LineShape line{8.0, 0.01};
  const odmr::GateProtocol protocol{2.8, 20000, 6};
  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto sweep = odmr::simulate_odmr(sys, grid, line, 20000.0, protocol, {900, seed});
    const auto fit = odmr::fit_odmr(sweep);
    const double err = std::fabs(fit.center_mhz - 68.4);
    worst = std::max(worst, err);
    good += fit.fit.converged && err <= 0.5;
  }
  o.check(good >= 90, fmt("%.0f/100 centers within 0.5 MHz of 68.4 (worst %.3f)", good, worst));
  return o;
}

// ---------------------------------------------------------------- 10-12

Outcome depth_statistics() {
  Outcome o;
  constexpr double kMu = 42.0;
  constexpr double kSigma = 35.0;
  std::vector<std::pair<double, double>> profile;
  for (int k = 0; k < 400; ++k) {
    const double z = k + 0.5;
    profile.emplace_back(z, std::exp(-0.5 * std::pow((z - kMu) / kSigma, 2)));
  }
  const auto d = scanstats::depth_stats(profile);
  const auto ref = oracle::truncated_normal_below(kMu, kSigma, 0.0);
  o.check(std::fabs(d.mean_depth_nm - ref.mean) <= 0.5, fmt("mean %.3f vs %.3f nm", d.mean_depth_nm, ref.mean));
  o.check(std::fabs(d.straggle_nm - ref.sd) <= 0.5, fmt("straggle %.3f vs %.3f nm", d.straggle_nm, ref.sd));
  return o;
}

Outcome scan_pipeline() {
  Outcome o;
  emitter::ScanSpec spec;
  spec.rotation_deg = 3.0;
  spec.background = 100.0;
  // Peak pixel excess = 4 x background for a pixel-centred spot.
  const double peak_fraction = std::pow(std::erf(0.5 * spec.pixel_um / (std::numbers::sqrt2 * spec.psf_sigma_um)), 2);
  spec.site_rates = {4.0 * spec.background / peak_fraction};
  const auto truth = spec.sites();
  const auto spots = scanstats::detect_spots(emitter::synth_scan(spec, {1100, 0}));
  int hits = 0;
  int false_pos = 0;
  std::vector<bool> used(truth.size(), false);
  for (const auto& s : spots) {
    bool matched = false;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      if (!used[k] && std::hypot(s.x_um(spec.pixel_um) - truth[k].x_um, s.y_um(spec.pixel_um) - truth[k].y_um) < 0.3) {
        used[k] = matched = true;
        ++hits;
        break;
      }
    }
    false_pos += !matched;
  }
  o.check(hits >= 63, fmt("%.0f/64 sites detected", hits));
  o.check(false_pos == 0, fmt("%.0f false positives", false_pos));
  std::vector<scanstats::SpotPosition> pos;
  for (const auto& s : spots) pos.push_back({s.x_um(spec.pixel_um), s.y_um(spec.pixel_um), s.intensity});
  const auto reg = scanstats::register_grid(pos, spec.spacing_um);
  o.check(std::fabs(reg.rotation_deg - 3.0) <= 0.1, fmt("rotation %.4f deg", reg.rotation_deg));
  return o;
}

Outcome photostability() {
  Outcome o;
  const auto poisson = emitter::poisson_trace(7400.0, 100.0, 10000, {1200, 0});
  const auto p = scanstats::photostability(poisson, 100.0);
  o.check(std::fabs(p.fano - 1.0) <= 0.05 && !p.blinking,
          fmt("Poisson: fano %.4f, blinking %.0f", p.fano, p.blinking ? 1.0 : 0.0));
  const auto telegraph = emitter::telegraph_trace(7400.0, 3.0 * 7400.0, 2.0, 100.0, 600, {1200, 1});
  const auto t = scanstats::photostability(telegraph, 100.0);
  o.check(t.blinking, fmt("telegraph: blinking %.0f, dBIC %.1f", t.blinking ? 1.0 : 0.0, t.delta_bic));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "fluence arithmetic", 1.0, fluence_arithmetic},
      {2, "yield arithmetic", 1.0, yield_arithmetic},
      {3, "Poisson statistics", 1.0, poisson_statistics},
      {4, "g2 round trip", 120.0, g2_round_trip},
      {5, "oracle equivalence", 300.0, oracle_equivalence},
      {6, "multi-emitter law", 180.0, multi_emitter_law},
      {7, "saturation fit", 30.0, saturation},
      {8, "ODMR physics", 1.0, odmr_physics},
      {9, "ODMR end to end", 120.0, odmr_end_to_end},
      {10, "depth statistics", 1.0, depth_statistics},
      {11, "scan pipeline", 10.0, scan_pipeline},
      {12, "photostability", 5.0, photostability},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.check(secs <= c.budget_s, fmt("%.2f s (budget %.0f s)", secs, c.budget_s));
    std::printf("%s criterion %2d %-20s %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str());
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
