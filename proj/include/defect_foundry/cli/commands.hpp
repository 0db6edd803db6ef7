#pragma once

// Subcommands of the defect_foundry tool. Each takes a fully merged Config,
// writes its outputs under out_dir together with manifest.json, and returns
// the process exit code: 0 success, 2 analysis failure. Input problems are
// thrown as InputError and mapped to exit code 1 by run().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "defect_foundry/cli/config.hpp"
#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/io.hpp"
#include "defect_foundry/core/rng.hpp"
#include "defect_foundry/emitter/presets.hpp"
#include "defect_foundry/emitter/rates.hpp"
#include "defect_foundry/emitter/scan.hpp"
#include "defect_foundry/emitter/simulate.hpp"
#include "defect_foundry/emitter/traces.hpp"
#include "defect_foundry/hbt/correlate.hpp"
#include "defect_foundry/hbt/g2_fit.hpp"
#include "defect_foundry/odmr/spin.hpp"
#include "defect_foundry/odmr/sweep.hpp"
#include "defect_foundry/scanstats/depth.hpp"
#include "defect_foundry/scanstats/grid.hpp"
#include "defect_foundry/scanstats/photostability.hpp"
#include "defect_foundry/scanstats/saturation.hpp"
#include "defect_foundry/scanstats/site.hpp"
#include "defect_foundry/scanstats/spots.hpp"
#include "defect_foundry/scanstats/yield.hpp"

namespace defect_foundry::cli {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- output

/// Output directory bookkeeping: every file written is listed in the
/// manifest with its FNV-1a hash.
class Run {
 public:
  explicit Run(const Config& cfg) : cfg_(cfg), dir_(cfg.str("out_dir")), format_(cfg.str("format")) {
    if (format_ != "csv" && format_ != "json") throw InputError("--format must be csv or json");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw InputError("cannot create output directory " + dir_.string());
  }

  [[nodiscard]] const fs::path& dir() const { return dir_; }

  void text(const std::string& name, const std::string& body) {
    io::write_text(dir_ / name, body);
    record(name, body);
  }

  void json_file(const std::string& name, const json& doc) { text(name, doc.dump(2) + "\n"); }

  /// Table as CSV or as a JSON object of columns, per --format.
  void table(const std::string& stem, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows) {
    if (format_ == "csv") {
      std::string body;
      for (std::size_t i = 0; i < header.size(); ++i) body += (i ? "," : "") + header[i];
      body += '\n';
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) body += (i ? "," : "") + io::format_number(r[i]);
        body += '\n';
      }
      text(stem + ".csv", body);
    } else {
      json doc = json::object();
      for (std::size_t c = 0; c < header.size(); ++c) {
        std::vector<double> col;
        col.reserve(rows.size());
        for (const auto& r : rows) col.push_back(r[c]);
        doc[header[c]] = io::json_numbers(col);
      }
      json_file(stem + ".json", doc);
    }
  }

  void timetags(const std::string& name, const TimeTagStream& s) {
    text(name, io::timetag_csv(s));
    const fs::path side = io::sidecar_path(name);
    json_file(side.string(), io::sidecar_json(s));
  }

  void manifest(const json& extra = json::object()) {
    json m = {{"command", cfg_.command()},
              {"version", kVersion},
              {"config_hash", cfg_.hash()},
              {"config", cfg_.doc()},
              {"outputs", outputs_}};
    if (cfg_.doc().contains("seed")) m["seed"] = cfg_.doc()["seed"];
    for (const auto& [k, v] : extra.items()) m[k] = v;
    io::write_json(dir_ / "manifest.json", m);
  }

 private:
  void record(const std::string& name, const std::string& body) {
    outputs_.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(body))}});
  }

  const Config& cfg_;
  fs::path dir_;
  std::string format_;
  json outputs_ = json::array();
};

inline json fit_json(const FitResult& f) {
  json params = json::object();
  json errors = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    params[f.names[i]] = io::json_number(f.params[i]);
    errors[f.names[i]] = i < f.std_errors.size() ? io::json_number(f.std_errors[i]) : json(nullptr);
  }
  return {{"params", params},
          {"std_errors", errors},
          {"converged", f.converged},
          {"iterations", f.iterations},
          {"residual_norm", io::json_number(f.residual_norm)},
          {"diagnostic", f.diagnostic}};
}

inline json common_defaults() {
  return {{"seed", std::uint64_t{0}}, {"out_dir", "out"}, {"format", "csv"}};
}

inline json with_common(json specific) {
  const json common = common_defaults();
  for (const auto& [k, v] : common.items()) specific[k] = v;
  return specific;
}

// ---------------------------------------------------------------- simulate

inline json simulate_defaults() {
  return with_common({{"preset", "paper-0.5mW"},
                      {"power_mw", nullptr},
                      {"k_exc_per_ns", nullptr},
                      {"k_em_per_ns", nullptr},
                      {"k_isc_per_ns", nullptr},
                      {"k_des_per_ns", nullptr},
                      {"efficiency", nullptr},
                      {"background_cps", nullptr},
                      {"split", 0.5},
                      {"duration_s", nullptr},
                      {"n_emitters", 1},
                      {"method", "aggregated"},
                      {"stream_id", std::uint64_t{0}}});
}

struct SimulationSetup {
  emitter::EmitterRates rates;
  emitter::DetectionModel detection;
  double duration_s = 1.0;
  double power_mw = 0.0;
};

/// Preset values first, then any explicitly given rate or detection key.
inline SimulationSetup resolve_simulation(const Config& cfg) {
  SimulationSetup s;
  const std::string preset = cfg.str("preset");
  bool have_base = false;
  if (preset != "none") {
    const auto p = emitter::find_g2_preset(preset);
    if (!p) throw InputError("unknown simulate preset '" + preset + "' (paper-0.5mW, paper-2mW or none)");
    s.rates = p->rates();
    s.detection = p->detection();
    s.duration_s = p->duration_s;
    s.power_mw = p->power_mw;
    have_base = true;
    // A different power with a preset scales the pump rate linearly.
    if (const auto pw = cfg.opt_num("power_mw")) {
      require(*pw >= 0.0, "power_mw must be non-negative");
      s.rates.k_exc *= *pw / p->power_mw;
      s.power_mw = *pw;
    }
  } else if (const auto pw = cfg.opt_num("power_mw")) {
    s.power_mw = *pw;
  }
  auto pick = [&](const char* key, double& field) {
    if (const auto v = cfg.opt_num(key)) {
      field = *v;
    } else if (!have_base) {
      throw InputError(std::string("preset 'none' requires '") + key + "'");
    }
  };
  pick("k_exc_per_ns", s.rates.k_exc);
  pick("k_em_per_ns", s.rates.k_em);
  pick("k_isc_per_ns", s.rates.k_isc);
  pick("k_des_per_ns", s.rates.k_des);
  pick("efficiency", s.detection.efficiency);
  if (const auto v = cfg.opt_num("background_cps")) s.detection.background_rate = *v;
  if (const auto v = cfg.opt_num("duration_s")) s.duration_s = *v;
  s.detection.split = cfg.num("split");
  s.rates.validate();
  s.detection.validate();
  require(s.duration_s > 0.0, "duration_s must be positive");
  return s;
}

inline int cmd_simulate(const Config& cfg) {
  const SimulationSetup s = resolve_simulation(cfg);
  const auto n = cfg.u64("n_emitters");
  require(n >= 1 && n <= 64, "n_emitters must be in [1, 64]");
  emitter::SimulationOptions opt;
  const std::string method = cfg.str("method");
  if (method == "aggregated") {
    opt.method = emitter::SimulationMethod::aggregated;
  } else if (method == "gillespie") {
    opt.method = emitter::SimulationMethod::gillespie;
  } else {
    throw InputError("method must be aggregated or gillespie");
  }
  opt.power_mw = s.power_mw;
  opt.label = cfg.str("preset");
  const std::vector<emitter::EmitterRates> emitters(n, s.rates);
  const auto pair =
      emitter::simulate_emitters(emitters, s.detection, s.duration_s, {cfg.u64("seed"), cfg.u64("stream_id")}, opt);

  Run run(cfg);
  run.timetags("ch0.csv", pair.ch0);
  run.timetags("ch1.csv", pair.ch1);
  run.manifest({{"rates_per_ns",
                 {{"k_exc", io::json_number(s.rates.k_exc)},
                  {"k_em", io::json_number(s.rates.k_em)},
                  {"k_isc", io::json_number(s.rates.k_isc)},
                  {"k_des", io::json_number(s.rates.k_des)}}},
                {"counts", {pair.ch0.size(), pair.ch1.size()}}});
  return 0;
}

// ---------------------------------------------------------------- g2

inline json g2_defaults() {
  return with_common({{"stream0", nullptr},
                      {"stream1", nullptr},
                      {"histogram", nullptr},
                      {"bin_ps", 1000},
                      {"window_ps", 500000},
                      {"rho", nullptr},
                      {"background_cps", nullptr}});
}

/// Reads `tau_ps,N_norm,raw_pairs` as written next to every g2 run.
inline CorrelationHistogram read_histogram(const fs::path& path) {
  const auto t = io::read_csv(path, {"tau_ps", "N_norm", "raw_pairs"});
  const std::size_t n = t.rows.size();
  if (n < 3 || n % 2 == 0) throw InputError(path.string() + ": need an odd number (>= 3) of histogram rows");
  CorrelationHistogram h;
  h.bin_width = static_cast<Picoseconds>(std::llround(t.rows[1][0] - t.rows[0][0]));
  if (h.bin_width <= 0) throw InputError(path.string() + ": tau_ps must increase");
  const std::size_t half = n / 2;
  h.window = static_cast<Picoseconds>(half) * h.bin_width;
  double ratio_sum = 0.0;
  int ratio_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto tau = static_cast<Picoseconds>(std::llround(t.rows[i][0]));
    const Picoseconds want = (static_cast<Picoseconds>(i) - static_cast<Picoseconds>(half)) * h.bin_width;
    if (tau != want) {
      throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": tau_ps must be a symmetric uniform grid");
    }
    const double raw = t.rows[i][2];
    if (raw < 0.0 || raw != std::floor(raw)) {
      throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": raw_pairs must be a non-negative integer");
    }
    h.values.push_back(t.rows[i][1]);
    h.raw_pairs.push_back(static_cast<std::uint64_t>(raw));
    if (raw > 0.0 && t.rows[i][1] > 0.0) {
      ratio_sum += raw / t.rows[i][1];
      ++ratio_n;
    }
  }
  h.norm_factor = ratio_n ? ratio_sum / ratio_n : 1.0;
  h.validate();
  return h;
}

inline json g2_report(const hbt::G2Fit& f) {
  return {{"a", io::json_number(f.a)},
          {"tau1_ns", io::json_number(f.tau1_ns)},
          {"tau2_ns", io::json_number(f.tau2_ns)},
          {"tau2_identifiable", f.tau2_identifiable},
          {"g2_zero_model", io::json_number(f.g2_zero)},
          {"g2_zero", io::json_number(f.measured_g2_zero)},
          {"g2_zero_err", io::json_number(f.measured_g2_zero_err)},
          {"rho", io::json_number(f.rho)},
          {"classification", f.classification},
          {"warnings", f.warnings},
          {"fit", fit_json(f.fit)}};
}

inline int cmd_g2(const Config& cfg) {
  CorrelationHistogram raw;
  double total_cps = 0.0;
  if (const auto hist = cfg.path("histogram")) {
    raw = read_histogram(*hist);
  } else {
    const auto p0 = cfg.path("stream0");
    const auto p1 = cfg.path("stream1");
    if (!p0 || !p1) throw InputError("g2 needs two time-tag files or --histogram");
    const TimeTagStream s0 = io::read_timetags(*p0);
    const TimeTagStream s1 = io::read_timetags(*p1);
    const auto bin = static_cast<Picoseconds>(cfg.u64("bin_ps"));
    const auto window = static_cast<Picoseconds>(cfg.u64("window_ps"));
    raw = hbt::correlate(s0, s1, bin, window);
    total_cps = count_rate(s0) + count_rate(s1);
  }
  double rho = 1.0;
  if (const auto r = cfg.opt_num("rho")) {
    rho = *r;
  } else if (const auto bg = cfg.opt_num("background_cps")) {
    if (total_cps <= 0.0) throw InputError("background_cps needs time-tag inputs to know the total rate");
    rho = hbt::signal_fraction(total_cps, *bg);
  }
  require(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");

  const auto corrected = hbt::background_correct(raw, rho);
  const auto fit = hbt::fit_g2(raw, rho);

  Run run(cfg);
  {
    std::string body = "tau_ps,N_norm,raw_pairs\n";
    for (std::size_t i = 0; i < raw.size(); ++i) {
      body += std::to_string(raw.tau_ps(i)) + "," + io::format_number(raw.values[i]) + "," +
              std::to_string(raw.raw_pairs[i]) + "\n";
    }
    run.text("g2_raw.csv", body);
  }
  std::vector<std::vector<double>> rows;
  const auto model = fit.tau2_identifiable ? numfit::g2_model() : numfit::g2_two_level_model();
  for (std::size_t i = 0; i < corrected.size(); ++i) {
    const double tau = corrected.tau_ns(i);
    rows.push_back({static_cast<double>(corrected.tau_ps(i)), corrected.values[i], model.eval(fit.fit.params, tau)});
  }
  run.table("g2_corrected", {"tau_ps", "g2", "g2_fit"}, rows);
  run.json_file("g2_fit.json", g2_report(fit));
  run.manifest();
  return fit.fit.converged ? 0 : 2;
}

// ---------------------------------------------------------------- saturation

inline json saturation_defaults() {
  return with_common({{"input", nullptr},
                      {"preset", nullptr},
                      {"powers_mw", json::array()},
                      {"duration_s", 1.0},
                      {"weighting", "none"}});
}

inline int cmd_saturation(const Config& cfg) {
  std::vector<scanstats::SaturationPoint> pts;
  if (const auto in = cfg.path("input")) {
    const auto t = io::read_csv(*in, {"power_mw", "rate_cps"});
    for (const auto& r : t.rows) pts.push_back({r[0], r[1]});
  } else if (const auto preset = cfg.path("preset")) {
    if (*preset != "paper-saturation") throw InputError("unknown saturation preset '" + *preset + "'");
    const auto sp = emitter::saturation_preset();
    auto powers = cfg.nums("powers_mw");
    if (powers.empty()) {
      powers = scanstats::log_spaced_powers(emitter::kSaturationPowerMw / 20.0, emitter::kSaturationPowerMw * 20.0, 8);
    }
    const double duration = cfg.num("duration_s");
    require(duration > 0.0, "duration_s must be positive");
    Rng rng({cfg.u64("seed"), 0});
    for (double p : powers) {
      require(p > 0.0, "powers_mw must be positive");
      const double rate = sp.detection.efficiency * emitter::emission_rate_cps(sp.model.at(p));
      pts.push_back({p, static_cast<double>(rng.poisson(rate * duration)) / duration});
    }
  } else {
    throw InputError("saturation needs an input CSV (power_mw,rate_cps) or --preset paper-saturation");
  }
  const std::string w = cfg.str("weighting");
  if (w != "none" && w != "relative") throw InputError("weighting must be none or relative");
  const auto fit = scanstats::fit_saturation(
      pts, w == "relative" ? scanstats::SaturationWeighting::relative : scanstats::SaturationWeighting::none);

  Run run(cfg);
  std::vector<std::vector<double>> rows;
  for (const auto& p : pts) rows.push_back({p.power_mw, p.rate_cps, fit.rate_at(p.power_mw)});
  run.table("saturation_curve", {"power_mw", "rate_cps", "fit_cps"}, rows);
  run.json_file("saturation_fit.json", {{"I_s_cps", io::json_number(fit.I_s)},
                                        {"P0_mw", io::json_number(fit.P0)},
                                        {"I_s_err_cps", io::json_number(fit.fit.std_errors.at(0))},
                                        {"P0_err_mw", io::json_number(fit.fit.std_errors.at(1))},
                                        {"weighting", w},
                                        {"fit", fit_json(fit.fit)}});
  run.manifest();
  return fit.fit.converged ? 0 : 2;
}

// ---------------------------------------------------------------- stability

inline json stability_defaults() {
  return with_common({{"input", nullptr},
                      {"trace", nullptr},
                      {"bin_ms", 100.0},
                      {"simulate", "poisson"},
                      {"rate_cps", 7400.0},
                      {"rate_high_cps", nullptr},
                      {"switch_s", 2.0},
                      {"n_bins", 600}});
}

inline int cmd_stability(const Config& cfg) {
  const double bin_ms = cfg.num("bin_ms");
  require(bin_ms > 0.0, "bin_ms must be positive");
  std::vector<double> counts;
  if (const auto in = cfg.path("input")) {
    const auto s = io::read_timetags(*in);
    counts = bin_counts(s, static_cast<Picoseconds>(std::llround(bin_ms * 1e9)));
  } else if (const auto tr = cfg.path("trace")) {
    for (const auto& r : io::read_csv(*tr, {"counts"}).rows) counts.push_back(r[0]);
  } else {
    const std::string kind = cfg.str("simulate");
    const double rate = cfg.num("rate_cps");
    const auto n = cfg.u64("n_bins");
    const RngSpec spec{cfg.u64("seed"), 0};
    if (kind == "poisson") {
      counts = emitter::poisson_trace(rate, bin_ms, n, spec);
    } else if (kind == "telegraph") {
      const double high = cfg.opt_num("rate_high_cps").value_or(5.0 * rate);
      counts = emitter::telegraph_trace(rate, high, cfg.num("switch_s"), bin_ms, n, spec);
    } else {
      throw InputError("simulate must be poisson or telegraph");
    }
  }
  const auto rep = scanstats::photostability(counts, bin_ms);

  Run run(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) rows.push_back({static_cast<double>(i) * bin_ms * 1e-3, counts[i]});
  run.table("trace", {"t_s", "counts"}, rows);
  run.json_file("stability.json", {{"n_bins", rep.n_bins},
                                   {"bin_ms", io::json_number(bin_ms)},
                                   {"mean_counts", io::json_number(rep.mean_counts)},
                                   {"mean_rate_cps", io::json_number(rep.mean_rate_cps)},
                                   {"fano", io::json_number(rep.fano)},
                                   {"delta_bic", io::json_number(rep.delta_bic)},
                                   {"mixture_means", {io::json_number(rep.mean_low), io::json_number(rep.mean_high)}},
                                   {"mixture_weight_high", io::json_number(rep.weight_high)},
                                   {"blinking", rep.blinking}});
  run.manifest();
  return 0;
}

// ---------------------------------------------------------------- scan

inline json scan_detection_defaults() {
  return {{"pixel_um", 0.1}, {"pitch_um", 2.0}, {"snr", 5.0}, {"min_sep_px", 5.0}, {"single_ref", nullptr}};
}

inline json scan_defaults() {
  json d = with_common({{"input", nullptr},
                        {"extent_um", 16.0},
                        {"psf_sigma_um", 0.15},
                        {"rotation_deg", 0.0},
                        {"site_rate", 1000.0},
                        {"emitters_mean", nullptr},
                        {"background", 10.0}});
  const json detection = scan_detection_defaults();
  for (const auto& [k, v] : detection.items()) d[k] = v;
  return d;
}

struct ScanAnalysis {
  std::vector<scanstats::Spot> spots;
  scanstats::GridRegistration grid;
  double single_ref = 0.0;
};

inline ScanAnalysis analyze_scan(const Image& img, const Config& cfg) {
  ScanAnalysis a;
  const double pixel = cfg.num("pixel_um");
  require(pixel > 0.0, "pixel_um must be positive");
  a.spots = scanstats::detect_spots(img, cfg.num("min_sep_px"), cfg.num("snr"));
  if (a.spots.size() < 3) throw AnalysisError("scan: fewer than 3 spots detected, cannot register the lattice");
  std::vector<scanstats::SpotPosition> pos;
  for (const auto& s : a.spots) pos.push_back({s.x_um(pixel), s.y_um(pixel), s.intensity});
  a.grid = scanstats::register_grid(pos, cfg.num("pitch_um"));
  if (const auto ref = cfg.opt_num("single_ref")) {
    a.single_ref = *ref;
  } else {
    // Dimmest quartile of detected sites as the single-emitter reference.
    std::vector<double> v;
    for (const auto& s : a.spots) v.push_back(s.intensity);
    std::sort(v.begin(), v.end());
    a.single_ref = v[v.size() / 4];
  }
  require(a.single_ref > 0.0, "single_ref must be positive");
  scanstats::classify_sites(a.grid.sites, a.single_ref);
  return a;
}

inline json site_json(const scanstats::SiteRecord& s) {
  return {{"i", s.i},
          {"j", s.j},
          {"x_um", io::json_number(s.x_um)},
          {"y_um", io::json_number(s.y_um)},
          {"intensity", io::json_number(s.intensity)},
          {"g2_zero", s.g2_zero ? io::json_number(*s.g2_zero) : json(nullptr)},
          {"n_emitters", s.n_emitters},
          {"detected", s.detected}};
}

inline json sites_document(const ScanAnalysis& a) {
  json sites = json::array();
  for (const auto& s : a.grid.sites) sites.push_back(site_json(s));
  return {{"registration",
           {{"origin_um", {io::json_number(a.grid.origin_x_um), io::json_number(a.grid.origin_y_um)}},
            {"rotation_deg", io::json_number(a.grid.rotation_deg)},
            {"pitch_um", io::json_number(a.grid.pitch_um)},
            {"residual_rms_um", io::json_number(a.grid.residual_rms_um)},
            {"columns", a.grid.columns},
            {"rows", a.grid.rows},
            {"warnings", a.grid.warnings}}},
          {"single_ref", io::json_number(a.single_ref)},
          {"n_spots", a.spots.size()},
          {"sites", sites}};
}

inline int cmd_scan(const Config& cfg) {
  Image img;
  Run run(cfg);
  if (const auto in = cfg.path("input")) {
    img = io::read_image(*in);
  } else {
    emitter::ScanSpec spec;
    spec.extent_um = cfg.num("extent_um");
    spec.pixel_um = cfg.num("pixel_um");
    spec.spacing_um = cfg.num("pitch_um");
    spec.psf_sigma_um = cfg.num("psf_sigma_um");
    spec.rotation_deg = cfg.num("rotation_deg");
    spec.background = cfg.num("background");
    const double rate = cfg.num("site_rate");
    spec.site_rates = {rate};
    if (const auto mean = cfg.opt_num("emitters_mean")) {
      // Poisson number of emitters per aperture, each contributing site_rate.
      Rng rng({cfg.u64("seed"), 1});
      const std::size_t n = spec.nodes_per_side();
      spec.site_rates.assign(n * n, 0.0);
      for (double& r : spec.site_rates) r = rate * static_cast<double>(rng.poisson(*mean));
    }
    img = emitter::synth_scan(spec, {cfg.u64("seed"), 0});
    std::string body;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) body += (x ? "," : "") + io::format_number(img.at(x, y));
      body += '\n';
    }
    run.text("scan_image.csv", body);
  }
  const auto a = analyze_scan(img, cfg);
  const double pixel = cfg.num("pixel_um");
  std::vector<std::vector<double>> rows;
  for (const auto& s : a.spots) rows.push_back({s.x_um(pixel), s.y_um(pixel), s.x_px, s.y_px, s.intensity, s.peak});
  run.table("spots", {"x_um", "y_um", "x_px", "y_px", "intensity", "peak"}, rows);
  run.json_file("sites.json", sites_document(a));
  run.manifest();
  return 0;
}

// ---------------------------------------------------------------- yield

inline json yield_defaults() {
  json d = with_common({{"input", nullptr},
                        {"fluence_per_cm2", 2.6e11},
                        {"aperture_nm", scanstats::kNominalApertureNm},
                        {"aperture_tolerance_nm", scanstats::kApertureToleranceNm},
                        {"lateral_straggle_nm", 0.0}});
  const json detection = scan_detection_defaults();
  for (const auto& [k, v] : detection.items()) d[k] = v;
  return d;
}

/// Accepts {"sites": [...]} or a bare array; each entry needs n_emitters.
inline std::vector<scanstats::SiteRecord> read_site_table(const fs::path& path) {
  const json doc = io::read_json(path);
  const json* arr = &doc;
  if (doc.is_object()) {
    if (!doc.contains("sites")) throw InputError(path.string() + ": expected a 'sites' array");
    arr = &doc.at("sites");
  }
  if (!arr->is_array()) throw InputError(path.string() + ": 'sites' must be an array");
  std::vector<scanstats::SiteRecord> out;
  std::size_t idx = 0;
  for (const auto& e : *arr) {
    const std::string where = path.string() + ": site " + std::to_string(idx++);
    if (!e.is_object() || !e.contains("n_emitters") || !e.at("n_emitters").is_number_integer()) {
      throw InputError(where + ": needs an integer n_emitters");
    }
    scanstats::SiteRecord s;
    try {
      s.n_emitters = e.at("n_emitters").get<int>();
      if (e.contains("i")) s.i = e.at("i").get<int>();
      if (e.contains("j")) s.j = e.at("j").get<int>();
      if (e.contains("x_um")) s.x_um = e.at("x_um").get<double>();
      if (e.contains("y_um")) s.y_um = e.at("y_um").get<double>();
      if (e.contains("intensity")) s.intensity = e.at("intensity").get<double>();
      if (e.contains("g2_zero") && !e.at("g2_zero").is_null()) s.g2_zero = e.at("g2_zero").get<double>();
      s.detected = e.value("detected", s.n_emitters > 0);
    } catch (const json::exception& ex) {
      throw InputError(where + ": " + ex.what());
    }
    try {
      s.validate();
    } catch (const InputError& ex) {
      throw InputError(where + ": " + ex.what());
    }
    out.push_back(s);
  }
  return out;
}

inline json yield_json(const scanstats::YieldReport& r, const scanstats::IonInterval& ions, double lateral_nm) {
  json trunc = nullptr;
  if (r.truncated) {
    trunc = {{"lambda_hat", io::json_number(r.truncated->lambda_hat)},
             {"std_error", io::json_number(r.truncated->std_error)},
             {"single_fraction_model", io::json_number(numfit::ztp_pmf(1, r.truncated->lambda_hat))}};
  }
  return {{"n_sites", r.n_sites},
          {"lambda_hat", io::json_number(r.lambda_hat)},
          {"lambda_std_error", io::json_number(r.lambda_std_error)},
          {"single_fraction", io::json_number(r.single_fraction)},
          {"ions_per_aperture", io::json_number(r.ions_per_aperture)},
          {"ions_per_aperture_interval", {io::json_number(ions.low), io::json_number(ions.high)}},
          {"conversion_yield", io::json_number(r.conversion_yield)},
          {"model_single_fraction", io::json_number(r.model_single)},
          {"nonzero",
           {{"n_sites", r.n_nonzero},
            {"single_fraction", io::json_number(r.single_fraction_nonzero)},
            {"model_single_fraction", io::json_number(r.model_single_truncated)},
            {"zero_truncated_fit", trunc}}},
          {"histogram", io::json_numbers(r.histogram)},
          {"lateral_uncertainty_nm", io::json_number(lateral_nm)}};
}

inline int cmd_yield(const Config& cfg) {
  const auto in = cfg.path("input");
  if (!in) throw InputError("yield needs a site table (.json) or a scan image (.csv/.pgm)");
  std::vector<scanstats::SiteRecord> sites;
  const fs::path p(*in);
  if (p.extension() == ".json") {
    sites = read_site_table(p);
  } else {
    sites = analyze_scan(io::read_image(p), cfg).grid.sites;
  }
  if (sites.empty()) throw AnalysisError("yield: site table is empty");
  const double d = cfg.num("aperture_nm");
  const auto ions = scanstats::ions_per_aperture_interval(cfg.num("fluence_per_cm2"), d, cfg.num("aperture_tolerance_nm"));
  if (!(ions.mean > 0.0)) throw InputError("yield: fluence must be positive to define a conversion yield");
  const auto rep = scanstats::yield_report(std::span<const scanstats::SiteRecord>(sites), ions.mean);
  Run run(cfg);
  run.json_file("yield.json", yield_json(rep, ions, scanstats::lateral_uncertainty_nm(d, cfg.num("lateral_straggle_nm"))));
  run.manifest();
  return 0;
}

// ---------------------------------------------------------------- depth

inline json depth_defaults() {
  return with_common({{"input", nullptr},
                      {"preset", nullptr},
                      {"mean_nm", 42.0},
                      {"straggle_nm", 35.0},
                      {"max_depth_nm", 400.0},
                      {"step_nm", 1.0}});
}

inline int cmd_depth(const Config& cfg) {
  std::vector<std::pair<double, double>> profile;
  Run run(cfg);
  if (const auto in = cfg.path("input")) {
    profile = scanstats::read_depth_profile(*in);
  } else if (const auto preset = cfg.path("preset")) {
    if (*preset != "paper-depth") throw InputError("unknown depth preset '" + *preset + "' (paper-depth)");
    // Gaussian stopping profile cut at the surface, sampled at bin midpoints.
    const double mu = cfg.num("mean_nm");
    const double sigma = cfg.num("straggle_nm");
    const double step = cfg.num("step_nm");
    require(sigma > 0.0 && step > 0.0 && cfg.num("max_depth_nm") > step, "depth preset: invalid grid");
    const auto n = static_cast<std::size_t>(std::floor(cfg.num("max_depth_nm") / step + 1e-9));
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < n; ++k) {
      const double z = (static_cast<double>(k) + 0.5) * step;
      const double x = (z - mu) / sigma;
      profile.emplace_back(z, std::exp(-0.5 * x * x));
      rows.push_back({z, profile.back().second});
    }
    run.table("depth_profile", {"depth_nm", "weight"}, rows);
  } else {
    throw InputError("depth needs an input CSV (depth_nm,weight) or --preset paper-depth");
  }
  const auto d = scanstats::depth_stats(profile);
  run.json_file("depth.json", {{"mean_depth_nm", io::json_number(d.mean_depth_nm)},
                               {"straggle_nm", io::json_number(d.straggle_nm)},
                               {"rows", d.profile.size()}});
  run.manifest();
  return 0;
}

// ---------------------------------------------------------------- odmr

inline json odmr_defaults() {
  return with_common({{"D_mhz", 34.2},
                      {"g_factor", 2.0},
                      {"B_gauss", {0.0, 0.0, 0.0}},
                      {"f_lo_mhz", 40.0},
                      {"f_hi_mhz", 100.0},
                      {"n_points", 61},
                      {"width_mhz", 8.0},
                      {"peak_contrast", 0.01},
                      {"rate_cps", 20000.0},
                      {"gate_ms", 2.8},
                      {"repetitions", 20000},
                      {"scans", 6}});
}

// A sweep without a resonance often leaves the line fit unconverged; that is
// reported as a non-detection rather than a failed run.
inline json odmr_fit_json(const odmr::OdmrFit& f) {
  json warnings = json::array();
  if (!f.fit.converged) warnings.push_back("fit did not converge (" + f.fit.diagnostic + "): no resonance detected");
  return {{"center_mhz", io::json_number(f.center_mhz)},
          {"width_mhz", io::json_number(f.width_mhz)},
          {"amplitude", io::json_number(f.amplitude)},
          {"offset", io::json_number(f.offset)},
          {"detected", f.detected},
          {"warnings", warnings},
          {"fit", fit_json(f.fit)}};
}

inline int cmd_odmr(const Config& cfg) {
  odmr::SpinSystem sys;
  sys.D_mhz = cfg.num("D_mhz");
  sys.g_factor = cfg.num("g_factor");
  const auto b = cfg.nums("B_gauss");
  if (b.size() != 3) throw InputError("B_gauss must have 3 components");
  sys.B_gauss = {b[0], b[1], b[2]};
  odmr::SweepGrid grid{cfg.num("f_lo_mhz"), cfg.num("f_hi_mhz"), static_cast<std::size_t>(cfg.u64("n_points"))};
  odmr::LineShape line{cfg.num("width_mhz"), cfg.num("peak_contrast")};
  odmr::GateProtocol protocol{cfg.num("gate_ms"), cfg.u64("repetitions"), cfg.u64("scans")};
  const auto sweep = odmr::simulate_odmr(sys, grid, line, cfg.num("rate_cps"), protocol, {cfg.u64("seed"), 0});
  const auto fit = odmr::fit_odmr(sweep);

  Run run(cfg);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < sweep.freqs_mhz.size(); ++k) {
    rows.push_back({sweep.freqs_mhz[k], sweep.contrast[k], sweep.counts_on[k], sweep.counts_off[k]});
  }
  run.table("odmr_sweep", {"freq_mhz", "contrast", "counts_on", "counts_off"}, rows);
  run.json_file("odmr_fit.json", odmr_fit_json(fit));
  run.manifest({{"transitions_mhz", io::json_numbers(odmr::transition_frequencies(sys))}});
  return 0;
}

/// Reads a sweep table (CSV or the JSON column form). The contrast is
/// recomputed from the integer counts when every point has on-counts, so a
/// refit reproduces the original fit exactly.
inline odmr::OdmrSweep read_sweep(const fs::path& path) {
  odmr::OdmrSweep sw;
  if (path.extension() == ".json") {
    const json doc = io::read_json(path);
    try {
      sw.freqs_mhz = doc.at("freq_mhz").get<std::vector<double>>();
      sw.contrast = doc.at("contrast").get<std::vector<double>>();
      sw.counts_on = doc.at("counts_on").get<std::vector<double>>();
      sw.counts_off = doc.at("counts_off").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw InputError(path.string() + ": " + e.what());
    }
  } else {
    for (const auto& r : io::read_csv(path, {"freq_mhz", "contrast", "counts_on", "counts_off"}).rows) {
      sw.freqs_mhz.push_back(r[0]);
      sw.contrast.push_back(r[1]);
      sw.counts_on.push_back(r[2]);
      sw.counts_off.push_back(r[3]);
    }
  }
  sw.validate();
  if (std::all_of(sw.counts_on.begin(), sw.counts_on.end(), [](double c) { return c > 0.0; })) {
    sw.contrast = odmr::odmr_contrast(sw.counts_on, sw.counts_off, &sw.valid);
  }
  return sw;
}

inline json odmr_fit_defaults() { return with_common({{"input", nullptr}}); }

inline int cmd_odmr_fit(const Config& cfg) {
  const auto in = cfg.path("input");
  if (!in) throw InputError("odmr-fit needs a sweep file");
  const auto fit = odmr::fit_odmr(read_sweep(*in));
  Run run(cfg);
  run.json_file("odmr_fit.json", odmr_fit_json(fit));
  run.manifest();
  return 0;
}

// ---------------------------------------------------------------- registry

struct CommandSpec {
  std::string name;
  std::string help;
  std::function<json()> defaults;
  std::function<int(const Config&)> run;
};

inline const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> list{
      {"simulate", "simulate a two-detector time-tag stream", simulate_defaults, cmd_simulate},
      {"g2", "correlate two time-tag files (or re-fit a histogram) and fit g2", g2_defaults, cmd_g2},
      {"saturation", "fit I(P) = I_s / (1 + P0 / P)", saturation_defaults, cmd_saturation},
      {"stability", "Fano factor and blinking test of a count trace", stability_defaults, cmd_stability},
      {"scan", "detect spots on a scan map and register the aperture lattice", scan_defaults, cmd_scan},
      {"yield", "emitters-per-aperture statistics and conversion yield", yield_defaults, cmd_yield},
      {"depth", "mean depth and straggle of an implantation profile", depth_defaults, cmd_depth},
      {"odmr", "simulate a gated ODMR sweep and fit the resonance", odmr_defaults, cmd_odmr},
      {"odmr-fit", "fit the resonance of an existing sweep", odmr_fit_defaults, cmd_odmr_fit},
  };
  return list;
}

inline const CommandSpec& find_command(const std::string& name) {
  for (const auto& c : commands()) {
    if (c.name == name) return c;
  }
  throw InputError("unknown command '" + name + "'");
}

/// Runs a command from a config document plus overrides (the CLI's flags).
/// Throws; run() in main converts exceptions to exit codes.
inline int execute(const std::string& name, const std::optional<fs::path>& config_file, const json& overrides) {
  const auto& spec = find_command(name);
  Config cfg(name, spec.defaults());
  if (config_file) cfg.merge_file(*config_file);
  cfg.merge(overrides, "command line");
  return spec.run(cfg);
}

}  // namespace defect_foundry::cli
