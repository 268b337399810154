#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"
#include "ltm/sim/rng.hpp"

namespace ltm::sim {

// Where the participant looks when not responding to a prompt. Weights are
// indexed like kAllGazeTargets; dwell times are geometric in ticks.
struct GazeProfile {
  std::array<double, 5> weights{0.3, 0.1, 0.2, 0.1, 0.3};
  Millis mean_dwell{1500};

  double weight(GazeTarget g) const { return weights[static_cast<std::size_t>(g)]; }
};

// Stochastic responder. Per-level Bernoulli response with an independent
// attention-lapse mixture: a lapse sends the gaze elsewhere regardless of how
// strong the prompt was.
struct ParticipantModel {
  std::string id = "participant";
  std::vector<double> base_hit_prob{0.2, 0.4, 0.6, 0.8, 0.9, 1.0};
  double lapse_prob = 0.0;
  double learning_rate = 1.0;
  Millis latency_mean{2000};
  Millis latency_spread{800};
  // Chance that an on-target response comes with a full body turn.
  double body_rotation_prob = 0.0;
  GazeProfile gaze;
  std::string severity_tag;
  std::uint64_t rng_seed = 0;

  double hit_prob(int level) const {
    require(level >= 1 && level <= static_cast<int>(base_hit_prob.size()),
            "participant model has no hit probability for this prompt level");
    return base_hit_prob[static_cast<std::size_t>(level - 1)];
  }

  void validate() const {
    require(!base_hit_prob.empty(), "base_hit_prob must not be empty");
    for (std::size_t i = 0; i < base_hit_prob.size(); ++i) {
      require(base_hit_prob[i] >= 0.0 && base_hit_prob[i] <= 1.0, "base_hit_prob entries must lie in [0,1]");
      if (i > 0) require(base_hit_prob[i] >= base_hit_prob[i - 1], "base_hit_prob must be non-decreasing in level");
    }
    require(lapse_prob >= 0.0 && lapse_prob <= 1.0, "lapse_prob must lie in [0,1]");
    require(body_rotation_prob >= 0.0 && body_rotation_prob <= 1.0, "body_rotation_prob must lie in [0,1]");
    require(learning_rate >= 1.0, "learning_rate must be >= 1");
    require(latency_mean.count() >= 0 && latency_spread.count() >= 0, "latency parameters must be non-negative");
    require(gaze.mean_dwell.count() > 0, "gaze.mean_dwell must be positive");
    double total = 0.0;
    for (double w : gaze.weights) {
      require(w >= 0.0, "gaze weights must be non-negative");
      total += w;
    }
    require(total > 0.0, "gaze weights must not all be zero");
  }
};

namespace detail {

inline Millis draw_latency(const ParticipantModel& m, Rng& rng, Millis upper) {
  const double raw = rng.normal(static_cast<double>(m.latency_mean.count()),
                                static_cast<double>(m.latency_spread.count()));
  const double clamped = std::clamp(raw, 0.0, static_cast<double>(upper.count()));
  return Millis{static_cast<std::int64_t>(std::floor(clamped + 0.5))};
}

inline double round_tenth(double x) { return std::floor(x * 10.0 + 0.5) / 10.0; }

inline GazeTarget distractor_for(GazeTarget expected) {
  switch (expected) {
    case GazeTarget::Robot1: return GazeTarget::Robot2;
    case GazeTarget::Robot2: return GazeTarget::Robot1;
    case GazeTarget::TargetMonitor: return GazeTarget::NonTargetMonitor;
    default: return GazeTarget::Elsewhere;
  }
}

inline GazeTarget draw_gaze(const GazeProfile& profile, Rng& rng) {
  const double total = std::accumulate(profile.weights.begin(), profile.weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < profile.weights.size(); ++i) {
    if (u < profile.weights[i]) return kAllGazeTargets[i];
    u -= profile.weights[i];
  }
  // Rounding can leave u at the very top; fall back to the last positive weight.
  for (std::size_t i = profile.weights.size(); i-- > 0;) {
    if (profile.weights[i] > 0.0) return kAllGazeTargets[i];
  }
  return GazeTarget::Elsewhere;
}

}  // namespace detail

// Draw one observation for `prompt`. On-target responses land inside the
// window with a modest torso rotation (unless a body turn is drawn), so the
// chance of a hit is exactly (1 - lapse) * base_hit_prob[level].
// Every call consumes the same number of draws so the stream stays aligned.
inline BehaviorSample sample_response(const ParticipantModel& model, const PromptSpec& prompt,
                                      GazeTarget expected_target, Millis window, Rng& rng) {
  const double p_hit = model.hit_prob(prompt.level);
  require(window.count() > 0, "sample_response(): window must be positive");

  const bool lapse = rng.bernoulli(model.lapse_prob);
  const bool on_target = rng.bernoulli(p_hit);
  const bool body_turn = rng.bernoulli(model.body_rotation_prob);
  const double torso_u = rng.uniform();

  BehaviorSample s;
  if (lapse) {
    s.gaze_target = GazeTarget::Elsewhere;
    s.latency = detail::draw_latency(model, rng, 2 * window);
    s.torso_rotation_degrees = detail::round_tenth(30.0 * torso_u);
  } else if (on_target) {
    s.gaze_target = expected_target;
    s.latency = detail::draw_latency(model, rng, window);
    s.torso_rotation_degrees = detail::round_tenth(body_turn ? 120.0 + 60.0 * torso_u : 30.0 * torso_u);
  } else {
    s.gaze_target = detail::distractor_for(expected_target);
    s.latency = detail::draw_latency(model, rng, 2 * window);
    s.torso_rotation_degrees = detail::round_tenth(30.0 * torso_u);
  }
  return s;
}

// Cross-session learning on the odds scale: odds(p) * rate, mapped back to a
// probability. Certain (p = 1) and impossible (p = 0) levels are fixed points.
inline ParticipantModel apply_session_learning(ParticipantModel model) {
  require(model.learning_rate >= 1.0, "learning_rate must be >= 1");
  for (double& p : model.base_hit_prob) {
    if (p <= 0.0 || p >= 1.0) continue;
    const double odds = p / (1.0 - p) * model.learning_rate;
    p = std::clamp(odds / (1.0 + odds), 0.0, 1.0);
  }
  return model;
}

struct GazeTick {
  Millis t{0};
  GazeTarget target = GazeTarget::Elsewhere;

  friend bool operator==(const GazeTick&, const GazeTick&) = default;
};

// Piecewise-constant gaze signal sampled every `tick`. At each tick the
// participant keeps looking where they were with probability
// 1 - tick / mean_dwell, otherwise redraws a target from the profile.
inline std::vector<GazeTick> gaze_trace(const ParticipantModel& model, Millis duration, Rng& rng,
                                        Millis tick = Millis{100}) {
  require(tick.count() > 0, "gaze_trace(): tick must be positive");
  require(duration.count() >= 0, "gaze_trace(): negative duration");
  std::vector<GazeTick> trace;
  const auto n = duration.count() / tick.count();
  if (n == 0) return trace;
  trace.reserve(static_cast<std::size_t>(n));

  const double switch_prob =
      std::min(1.0, static_cast<double>(tick.count()) / static_cast<double>(model.gaze.mean_dwell.count()));
  GazeTarget current = detail::draw_gaze(model.gaze, rng);
  for (std::int64_t i = 0; i < n; ++i) {
    if (i > 0 && rng.bernoulli(switch_prob)) current = detail::draw_gaze(model.gaze, rng);
    trace.push_back({tick * i, current});
  }
  return trace;
}

}  // namespace ltm::sim
