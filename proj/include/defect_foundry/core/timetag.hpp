#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "defect_foundry/core/errors.hpp"

namespace defect_foundry {

/// Integer picoseconds; the only time unit used for tags and histograms.
using Picoseconds = std::int64_t;

inline constexpr Picoseconds kPsPerNs = 1'000;
inline constexpr Picoseconds kPsPerSecond = 1'000'000'000'000;

struct TimeTag {
  std::uint8_t channel = 0;
  Picoseconds t = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// Stream order: time first, channel breaks ties.
inline bool tag_less(const TimeTag& a, const TimeTag& b) {
  return a.t != b.t ? a.t < b.t : a.channel < b.channel;
}

struct AcquisitionMeta {
  double power_mw = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::string label;

  friend bool operator==(const AcquisitionMeta&, const AcquisitionMeta&) = default;
};

/// Immutable, sorted sequence of detector clicks over [0, duration].
class TimeTagStream {
 public:
  TimeTagStream() = default;

  /// Sorts `tags` (stable, by time then channel) and validates invariants.
  TimeTagStream(std::vector<TimeTag> tags, Picoseconds duration, AcquisitionMeta meta = {})
      : tags_(std::move(tags)), duration_(duration), meta_(std::move(meta)) {
    require(duration_ > 0, "stream duration must be positive");
    if (!std::is_sorted(tags_.begin(), tags_.end(), tag_less)) {
      std::stable_sort(tags_.begin(), tags_.end(), tag_less);
    }
    for (const TimeTag& tag : tags_) {
      require(tag.channel <= 1, "tag channel must be 0 or 1");
      require(tag.t >= 0 && tag.t <= duration_, "tag time outside [0, duration]");
    }
  }

  [[nodiscard]] const std::vector<TimeTag>& tags() const { return tags_; }
  [[nodiscard]] Picoseconds duration() const { return duration_; }
  [[nodiscard]] const AcquisitionMeta& meta() const { return meta_; }
  [[nodiscard]] std::size_t size() const { return tags_.size(); }
  [[nodiscard]] bool empty() const { return tags_.empty(); }

  [[nodiscard]] std::vector<Picoseconds> times() const {
    std::vector<Picoseconds> out;
    out.reserve(tags_.size());
    for (const TimeTag& tag : tags_) out.push_back(tag.t);
    return out;
  }

  [[nodiscard]] TimeTagStream channel(std::uint8_t ch) const {
    std::vector<TimeTag> out;
    for (const TimeTag& tag : tags_) {
      if (tag.channel == ch) out.push_back(tag);
    }
    return {std::move(out), duration_, meta_};
  }

  friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;

 private:
  std::vector<TimeTag> tags_;
  Picoseconds duration_ = 1;
  AcquisitionMeta meta_;
};

/// Sorted union of two streams of equal duration. Metadata comes from `a`.
inline TimeTagStream merge_streams(const TimeTagStream& a, const TimeTagStream& b) {
  require(a.duration() == b.duration(), "merge_streams: duration mismatch");
  std::vector<TimeTag> merged;
  merged.reserve(a.size() + b.size());
  std::merge(a.tags().begin(), a.tags().end(), b.tags().begin(), b.tags().end(),
             std::back_inserter(merged), tag_less);
  return {std::move(merged), a.duration(), a.meta()};
}

/// Mean detection rate in counts per second.
inline double count_rate(const TimeTagStream& s) {
  require(s.duration() > 0, "count_rate: zero duration");
  return static_cast<double>(s.size()) * static_cast<double>(kPsPerSecond) /
         static_cast<double>(s.duration());
}

/// Counts per consecutive bin of width `bin` starting at t = 0; a trailing
/// partial bin is dropped.
inline std::vector<double> bin_counts(const TimeTagStream& s, Picoseconds bin) {
  require(bin > 0, "bin_counts: bin must be positive");
  const auto n_bins = static_cast<std::size_t>(s.duration() / bin);
  std::vector<double> counts(n_bins, 0.0);
  for (const TimeTag& tag : s.tags()) {
    const auto idx = static_cast<std::size_t>(tag.t / bin);
    if (idx < n_bins) counts[idx] += 1.0;
  }
  return counts;
}

}  // namespace defect_foundry
