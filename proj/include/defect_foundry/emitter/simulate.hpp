#pragma once

// Photon time-tag generation for an HBT setup looking at one or more
// independent three-level emitters plus uncorrelated background.
//
// Two exact samplers are provided:
//   gillespie   one event per state transition (reference implementation)
//   aggregated  one event per *detected* photon. Every emission returns the
//               emitter to g, so detections form a renewal process. Between
//               two detections there are N ~ Geom(eta) emission cycles with
//               K ~ NegBin(N, k_em/(k_em+k_isc)) shelving excursions in total,
//               hence N+K ground dwells, N+K excited dwells and K shelved
//               dwells; their sum is Gamma(N+K, k_exc) + Gamma(N+K, k_em+k_isc)
//               + Gamma(K, k_des). Same law as gillespie, cost independent of eta.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/rng.hpp"
#include "defect_foundry/core/timetag.hpp"
#include "defect_foundry/emitter/rates.hpp"

namespace defect_foundry::emitter {

enum class SimulationMethod { aggregated, gillespie };

struct SimulationOptions {
  SimulationMethod method = SimulationMethod::aggregated;
  double power_mw = 0.0;  // recorded in the stream metadata only
  std::string label = "sim";
};

struct ChannelPair {
  TimeTagStream ch0;
  TimeTagStream ch1;
};

namespace detail {

inline double warmup_ns(const EmitterRates& r) {
  double slowest = 1.0 / r.k_exc;
  slowest = std::max(slowest, 1.0 / (r.k_em + r.k_isc));
  if (r.k_isc > 0.0 && r.k_des > 0.0) slowest = std::max(slowest, 1.0 / r.k_des);
  return 20.0 * slowest;
}

// Detected-photon times in ns on [0, duration_ns), ascending.
inline std::vector<double> detections_gillespie(const EmitterRates& r, double eta, double duration_ns, Rng& rng) {
  std::vector<double> out;
  if (r.k_exc == 0.0 || eta == 0.0) return out;
  const double k_out = r.k_em + r.k_isc;
  double t = -warmup_ns(r);
  enum { kGround, kExcited, kShelved } state = kGround;
  while (t < duration_ns) {
    switch (state) {
      case kGround:
        t += rng.exponential(r.k_exc);
        state = kExcited;
        break;
      case kExcited:
        t += rng.exponential(k_out);
        if (rng.uniform() * k_out < r.k_em) {
          state = kGround;
          if (rng.bernoulli(eta) && t >= 0.0 && t < duration_ns) out.push_back(t);
        } else {
          state = kShelved;
        }
        break;
      case kShelved:
        if (r.k_des == 0.0) return out;  // absorbing dark state
        t += rng.exponential(r.k_des);
        state = kGround;
        break;
    }
  }
  return out;
}

inline std::vector<double> detections_aggregated(const EmitterRates& r, double eta, double duration_ns, Rng& rng) {
  if (r.k_isc > 0.0 && r.k_des == 0.0) return detections_gillespie(r, eta, duration_ns, rng);
  std::vector<double> out;
  if (r.k_exc == 0.0 || eta == 0.0) return out;
  const double k_out = r.k_em + r.k_isc;
  const double p_emit = r.k_em / k_out;
  double t = -warmup_ns(r);
  for (;;) {
    const std::uint64_t cycles = rng.geometric(eta);
    const std::uint64_t shelvings = r.k_isc > 0.0 ? rng.negative_binomial(cycles, p_emit) : 0;
    const auto visits = static_cast<double>(cycles + shelvings);
    t += rng.gamma(visits, 1.0 / r.k_exc) + rng.gamma(visits, 1.0 / k_out);
    if (shelvings > 0) t += rng.gamma(static_cast<double>(shelvings), 1.0 / r.k_des);
    if (t >= duration_ns) break;
    if (t >= 0.0) out.push_back(t);
  }
  return out;
}

inline std::vector<TimeTag> poisson_tags(double rate_cps, Picoseconds duration, std::uint8_t channel, Rng& rng) {
  std::vector<TimeTag> out;
  if (rate_cps <= 0.0) return out;
  const double rate_per_ps = rate_cps / static_cast<double>(kPsPerSecond);
  out.reserve(static_cast<std::size_t>(rate_cps * static_cast<double>(duration) / kPsPerSecond * 1.05) + 16);
  double t = 0.0;
  for (;;) {
    t += rng.exponential(rate_per_ps);
    const auto ps = static_cast<Picoseconds>(t);
    if (ps > duration) break;
    out.push_back({channel, ps});
  }
  return out;
}

}  // namespace detail

/// Independent emitters observed through one HBT setup; background is added
/// once per channel as Poisson processes of rate background_rate * split and
/// background_rate * (1 - split).
inline ChannelPair simulate_emitters(std::span<const EmitterRates> emitters, const DetectionModel& det,
                                     double duration_s, RngSpec spec, const SimulationOptions& options = {}) {
  require(duration_s > 0.0 && std::isfinite(duration_s), "simulate: duration must be positive");
  det.validate();
  auto all_zero = [](const EmitterRates& r) {
    return r.k_exc == 0.0 && r.k_em == 0.0 && r.k_isc == 0.0 && r.k_des == 0.0;
  };
  for (const EmitterRates& r : emitters) {
    if (!all_zero(r)) r.validate();
  }
  const auto duration = static_cast<Picoseconds>(std::llround(duration_s * static_cast<double>(kPsPerSecond)));
  const double duration_ns = static_cast<double>(duration) / static_cast<double>(kPsPerNs);

  std::vector<TimeTag> sig0;
  std::vector<TimeTag> sig1;
  for (std::size_t e = 0; e < emitters.size(); ++e) {
    if (all_zero(emitters[e])) continue;  // switched-off emitter: no signal
    Rng rng(spec.child(100 + e));
    const auto times = options.method == SimulationMethod::gillespie
                           ? detail::detections_gillespie(emitters[e], det.efficiency, duration_ns, rng)
                           : detail::detections_aggregated(emitters[e], det.efficiency, duration_ns, rng);
    Rng router(spec.child(200 + e));
    std::vector<TimeTag> e0;
    std::vector<TimeTag> e1;
    for (double t_ns : times) {
      const auto ps = std::min(static_cast<Picoseconds>(t_ns * static_cast<double>(kPsPerNs)), duration);
      if (router.bernoulli(det.split)) e0.push_back({0, ps}); else e1.push_back({1, ps});
    }
    auto merge_into = [](std::vector<TimeTag>& acc, std::vector<TimeTag>&& add) {
      if (acc.empty()) {
        acc = std::move(add);
        return;
      }
      std::vector<TimeTag> out;
      out.reserve(acc.size() + add.size());
      std::merge(acc.begin(), acc.end(), add.begin(), add.end(), std::back_inserter(out), tag_less);
      acc = std::move(out);
    };
    merge_into(sig0, std::move(e0));
    merge_into(sig1, std::move(e1));
  }

  Rng bg0_rng(spec.child(1));
  Rng bg1_rng(spec.child(2));
  auto bg0 = detail::poisson_tags(det.background_rate * det.split, duration, 0, bg0_rng);
  auto bg1 = detail::poisson_tags(det.background_rate * (1.0 - det.split), duration, 1, bg1_rng);

  auto combine = [](std::vector<TimeTag>& a, std::vector<TimeTag>& b) {
    std::vector<TimeTag> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), tag_less);
    std::vector<TimeTag>().swap(a);
    std::vector<TimeTag>().swap(b);
    return out;
  };

  AcquisitionMeta meta{options.power_mw, spec.seed, spec.stream_id, options.label + "/ch0"};
  AcquisitionMeta meta1 = meta;
  meta1.label = options.label + "/ch1";
  ChannelPair pair;
  pair.ch0 = TimeTagStream(combine(sig0, bg0), duration, std::move(meta));
  pair.ch1 = TimeTagStream(combine(sig1, bg1), duration, std::move(meta1));
  return pair;
}

inline ChannelPair simulate_stream(const EmitterRates& rates, const DetectionModel& det, double duration_s,
                                   RngSpec spec, const SimulationOptions& options = {}) {
  return simulate_emitters(std::span<const EmitterRates>(&rates, 1), det, duration_s, spec, options);
}

/// Per-state residence statistics of a single Gillespie trajectory started in g.
struct TrajectoryStats {
  double time_ground = 0.0;
  double time_excited = 0.0;
  double time_shelved = 0.0;
  std::uint64_t emissions = 0;
  std::vector<double> excited_dwells;  // ns, filled when requested

  [[nodiscard]] double total_time() const { return time_ground + time_excited + time_shelved; }
};

inline TrajectoryStats simulate_trajectory(const EmitterRates& r, std::uint64_t transitions, RngSpec spec,
                                           bool record_dwells = false) {
  r.validate();
  require(r.k_exc > 0.0, "simulate_trajectory: emitter must be pumped");
  require(r.k_isc == 0.0 || r.k_des > 0.0, "simulate_trajectory: absorbing shelving state");
  Rng rng(spec);
  TrajectoryStats stats;
  const double k_out = r.k_em + r.k_isc;
  int state = 0;
  for (std::uint64_t step = 0; step < transitions; ++step) {
    if (state == 0) {
      stats.time_ground += rng.exponential(r.k_exc);
      state = 1;
    } else if (state == 1) {
      const double dwell = rng.exponential(k_out);
      stats.time_excited += dwell;
      if (record_dwells) stats.excited_dwells.push_back(dwell);
      if (rng.uniform() * k_out < r.k_em) {
        state = 0;
        ++stats.emissions;
      } else {
        state = 2;
      }
    } else {
      stats.time_shelved += rng.exponential(r.k_des);
      state = 0;
    }
  }
  return stats;
}

}  // namespace defect_foundry::emitter
