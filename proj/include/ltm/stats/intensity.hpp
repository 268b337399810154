#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"
#include "ltm/sim/participant.hpp"

namespace ltm::stats {

// Per-level estimator: share of trials whose target hit came at exactly `level`.
inline double level_intensity(std::span<const TrialOutcome> outcomes, int level) {
  require(!outcomes.empty(), "level_intensity(): no trials");
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (o.hit_level && *o.hit_level == level) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

// I_n: share of trials that ended in a hit at or before `level`.
inline double cumulative_intensity(std::span<const TrialOutcome> outcomes, int level) {
  require(!outcomes.empty(), "cumulative_intensity(): no trials");
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (o.hit_level && *o.hit_level <= level) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

inline double miss_fraction(std::span<const TrialOutcome> outcomes) {
  require(!outcomes.empty(), "miss_fraction(): no trials");
  std::size_t misses = 0;
  for (const auto& o : outcomes) {
    if (!o.hit_level) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(outcomes.size());
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

// Mean and population SD of the hit level over trials that ended in a hit.
inline MeanSd avg_hit_prompt_level(std::span<const TrialOutcome> outcomes) {
  std::vector<double> levels;
  for (const auto& o : outcomes) {
    if (o.hit_level) levels.push_back(static_cast<double>(*o.hit_level));
  }
  require(!levels.empty(), "avg_hit_prompt_level(): no trial ended in a hit");
  // Integer levels: sum in exact arithmetic so the result is order independent.
  long long sum = 0;
  long long sum_sq = 0;
  for (double l : levels) {
    const auto li = static_cast<long long>(l);
    sum += li;
    sum_sq += li * li;
  }
  const double n = static_cast<double>(levels.size());
  const double mean = static_cast<double>(sum) / n;
  const double var = std::max(0.0, static_cast<double>(sum_sq) / n - mean * mean);
  return {mean, std::sqrt(var)};
}

struct IntensityReport {
  std::vector<double> per_level;   // index = level - 1
  std::vector<double> cumulative;  // index = level - 1
  double miss_fraction = 0.0;
  std::size_t total_trials = 0;
};

// Cumulative values are prefix sums of hit counts, so they are exactly
// non-decreasing and cumulative.back() + miss_fraction == 1.
inline IntensityReport intensity_report(std::span<const TrialOutcome> outcomes, int n_max) {
  require(!outcomes.empty(), "intensity_report(): no trials");
  require(n_max >= 1, "intensity_report(): n_max must be >= 1");
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_max), 0);
  std::size_t misses = 0;
  for (const auto& o : outcomes) {
    if (!o.hit_level) {
      ++misses;
      continue;
    }
    require(*o.hit_level >= 1 && *o.hit_level <= n_max, "intensity_report(): hit level outside 1..n_max");
    ++counts[static_cast<std::size_t>(*o.hit_level - 1)];
  }
  IntensityReport r;
  r.total_trials = outcomes.size();
  const double total = static_cast<double>(outcomes.size());
  std::size_t running = 0;
  for (std::size_t c : counts) {
    running += c;
    r.per_level.push_back(static_cast<double>(c) / total);
    r.cumulative.push_back(static_cast<double>(running) / total);
  }
  r.miss_fraction = static_cast<double>(misses) / total;
  return r;
}

// ---- looking time ---------------------------------------------------------

enum class GazeRegion { Robot, TargetMonitor, NonTargetMonitor, Elsewhere };

inline constexpr GazeRegion kAllGazeRegions[] = {GazeRegion::Robot, GazeRegion::TargetMonitor,
                                                 GazeRegion::NonTargetMonitor, GazeRegion::Elsewhere};

inline GazeRegion region_of(GazeTarget g) {
  switch (g) {
    case GazeTarget::Robot1:
    case GazeTarget::Robot2: return GazeRegion::Robot;
    case GazeTarget::TargetMonitor: return GazeRegion::TargetMonitor;
    case GazeTarget::NonTargetMonitor: return GazeRegion::NonTargetMonitor;
    case GazeTarget::Elsewhere: return GazeRegion::Elsewhere;
  }
  return GazeRegion::Elsewhere;
}

inline std::string_view to_string(GazeRegion r) {
  switch (r) {
    case GazeRegion::Robot: return "Robot";
    case GazeRegion::TargetMonitor: return "TargetMonitor";
    case GazeRegion::NonTargetMonitor: return "NonTargetMonitor";
    case GazeRegion::Elsewhere: return "Elsewhere";
  }
  return "?";
}

// Half-open time window [begin, end).
struct TimeInterval {
  Millis begin{0};
  Millis end{0};
  bool contains(Millis t) const { return t >= begin && t < end; }
};

namespace detail {

template <typename Match>
double looking_fraction_if(std::span<const sim::GazeTick> trace, const std::optional<TimeInterval>& interval,
                           Match match) {
  require(!trace.empty(), "looking_fraction(): empty trace");
  std::size_t considered = 0;
  std::size_t matching = 0;
  for (const auto& tick : trace) {
    if (interval && !interval->contains(tick.t)) continue;
    ++considered;
    if (match(tick.target)) ++matching;
  }
  if (considered == 0) return 0.0;
  return static_cast<double>(matching) / static_cast<double>(considered);
}

}  // namespace detail

inline double looking_fraction(std::span<const sim::GazeTick> trace, GazeTarget target,
                               std::optional<TimeInterval> interval = std::nullopt) {
  return detail::looking_fraction_if(trace, interval, [&](GazeTarget g) { return g == target; });
}

inline double looking_fraction(std::span<const sim::GazeTick> trace, GazeRegion region,
                               std::optional<TimeInterval> interval = std::nullopt) {
  return detail::looking_fraction_if(trace, interval, [&](GazeTarget g) { return region_of(g) == region; });
}

// Piecewise-constant gaze record with arbitrary boundaries, as stored in logs.
struct GazeSegment {
  Millis begin{0};
  Millis end{0};
  GazeTarget target = GazeTarget::Elsewhere;
  friend bool operator==(const GazeSegment&, const GazeSegment&) = default;
};

// Run-length encodes a tick trace; the last segment ends one tick after its
// final sample.
inline std::vector<GazeSegment> to_segments(std::span<const sim::GazeTick> trace, Millis tick = Millis{100}) {
  std::vector<GazeSegment> out;
  for (const auto& t : trace) {
    if (!out.empty() && out.back().target == t.target && out.back().end == t.t) {
      out.back().end = t.t + tick;
    } else {
      out.push_back({t.t, t.t + tick, t.target});
    }
  }
  return out;
}

namespace detail {

template <typename Match>
double segment_fraction_if(std::span<const GazeSegment> segs, Match match) {
  require(!segs.empty(), "looking_fraction(): empty trace");
  std::int64_t total = 0;
  std::int64_t matching = 0;
  for (const auto& s : segs) {
    require(s.end >= s.begin, "looking_fraction(): segment ends before it begins");
    const auto d = (s.end - s.begin).count();
    total += d;
    if (match(s.target)) matching += d;
  }
  if (total == 0) return 0.0;
  return static_cast<double>(matching) / static_cast<double>(total);
}

}  // namespace detail

// Time-weighted share of gaze on a target or region.
inline double looking_fraction(std::span<const GazeSegment> segs, GazeTarget target) {
  return detail::segment_fraction_if(segs, [&](GazeTarget g) { return g == target; });
}

inline double looking_fraction(std::span<const GazeSegment> segs, GazeRegion region) {
  return detail::segment_fraction_if(segs, [&](GazeTarget g) { return region_of(g) == region; });
}

}  // namespace ltm::stats
