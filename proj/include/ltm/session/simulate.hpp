#pragma once

// Simulated sessions on a virtual clock. Everything in the log is a function
// of (config, trials, participant model, seed).

#include <cstdint>
#include <optional>
#include <vector>

#include "ltm/protocol.hpp"
#include "ltm/session/log.hpp"
#include "ltm/session/payload.hpp"
#include "ltm/sim/participant.hpp"
#include "ltm/sim/rng.hpp"
#include "ltm/stats/intensity.hpp"

namespace ltm::session {

// RNG streams: 0 draws target sides, k = trial number drives the participant in
// that trial, and the two MRIS phases get streams of their own so enabling them
// never shifts the trial draws.
inline constexpr std::uint64_t kSessionStream = 0;
inline constexpr std::uint64_t kScriptStream = 1ULL << 32;
inline constexpr std::uint64_t kImitationStream = (1ULL << 32) + 1;

inline constexpr Millis kExchangeDuration{3000};
inline constexpr Millis kGazeTick{100};

struct Simulated {
  sim::ParticipantModel model;
  std::uint64_t seed = 0;
  int session = 0;  // index within an experiment plan; 0 when run on its own
};

namespace detail {

// Idle gaze for `duration`, starting at 0. The trace is drawn on whole ticks
// and the last segment is cut at `duration`.
inline std::vector<stats::GazeSegment> idle_gaze(const sim::ParticipantModel& m, Millis duration, sim::Rng& rng) {
  if (duration.count() <= 0) return {};
  const Millis covered = ((duration + kGazeTick - Millis{1}) / kGazeTick) * kGazeTick;
  auto segs = stats::to_segments(sim::gaze_trace(m, covered, rng, kGazeTick), kGazeTick);
  while (!segs.empty() && segs.back().begin >= duration) segs.pop_back();
  if (!segs.empty()) segs.back().end = std::min(segs.back().end, duration);
  return segs;
}

inline json participant_descriptor(const Simulated& src, int trials) {
  json d = {{"mode", "simulated"}, {"trials", trials}, {"model", model_to_json(src.model)}};
  if (src.session > 0) d["session"] = src.session;
  return d;
}

inline json session_started_payload(const ProtocolConfig& cfg, int trials, Mode mode) {
  return {{"variant", std::string(to_string(cfg.variant))}, {"trials", trials}, {"mode", std::string(to_string(mode))}};
}

}  // namespace detail

// Greeting script run before the first MRIS trial: robot 1 stands and says
// hello with a wave, robot 2 answers the same way, then a seeded choice of
// robot turns to the participant. With a model, the participant's listening
// gaze is recorded on each step; an operator session records none.
inline std::vector<SessionEvent> run_inter_robot_script(const ProtocolConfig& cfg, const sim::ParticipantModel* model,
                                                        std::uint64_t seed, Millis start = Millis{0}) {
  require(cfg.variant == Variant::MrisLtm, "inter-robot script needs the two-robot variant");
  sim::Rng rng = sim::Rng::stream(seed, kScriptStream);
  const int engaging = rng.uniform_int(1, 2);

  struct Step {
    const char* act;
    int robot;
    json to;
  };
  const Step steps[] = {{"greet", 1, 2}, {"respond", 2, 1}, {"engage", engaging, "participant"}};

  std::vector<SessionEvent> events;
  Millis t = start;
  int exchange = 0;
  for (const auto& s : steps) {
    json p = {
        {"exchange", ++exchange}, {"act", s.act},           {"robot", s.robot},
        {"to", s.to},             {"utterance", "hello"},   {"gesture", "wave"},
        {"posture", "stand"},     {"duration_ms", kExchangeDuration.count()},
    };
    p["gaze"] = model ? segments_to_json(offset(detail::idle_gaze(*model, kExchangeDuration, rng), t)) : json(nullptr);
    events.push_back({events.size(), t, EventKind::InterRobotExchange, std::move(p)});
    t += kExchangeDuration;
  }
  return events;
}

struct ImitationResult {
  std::optional<int> robot;
  Millis waited{0};
  std::vector<stats::GazeSegment> gaze;
};

// Eye-contact gate after the last trial: wait up to the imitation timeout for
// a contiguous look at one robot of at least the contact threshold.
inline ImitationResult simulate_imitation_gate(const ProtocolConfig& cfg, const sim::ParticipantModel& model,
                                               std::uint64_t seed) {
  sim::Rng rng = sim::Rng::stream(seed, kImitationStream);
  const auto trace = sim::gaze_trace(model, cfg.imitation_timeout, rng, kGazeTick);

  ImitationResult r;
  r.waited = cfg.imitation_timeout;
  std::vector<GazeInterval> intervals;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    intervals.push_back({trace[i].target, kGazeTick});
    if (auto robot = imitation_gate(intervals, cfg.eye_contact_threshold)) {
      r.robot = robot;
      r.waited = trace[i].t + kGazeTick;
      break;
    }
  }
  for (auto s : stats::to_segments(trace, kGazeTick)) {
    if (s.begin >= r.waited) break;
    s.end = std::min(s.end, r.waited);
    r.gaze.push_back(s);
  }
  return r;
}

inline json imitation_payload(const ProtocolConfig& cfg, const ImitationResult& r, Millis start) {
  json gestures = json::array();
  if (r.robot) {
    for (const auto& g : imitation_sequence(*r.robot)) gestures.push_back(std::string(to_string(g.gesture)));
  }
  return {
      {"robot", r.robot ? json(*r.robot) : json(nullptr)},
      {"stimulus", "eye flash"},
      {"contact_threshold_ms", cfg.eye_contact_threshold.count()},
      {"waited_ms", r.waited.count()},
      {"gestures", gestures},
      {"gaze", segments_to_json(offset(r.gaze, start))},
  };
}

inline SessionLog run_session(const ProtocolConfig& cfg, int trials, const Simulated& src) {
  cfg.validate();
  src.model.validate();
  require(trials >= 1, "run_session(): trials must be >= 1");
  require(src.model.base_hit_prob.size() >= static_cast<std::size_t>(cfg.n_max),
          "participant model defines fewer levels than n_max");

  SessionHeader header{cfg, src.seed, Mode::Simulated, detail::participant_descriptor(src, trials)};
  const std::string digest = header_digest(header);
  LogWriter w(std::move(header));
  const auto& model = src.model;
  const bool two_robots = cfg.variant == Variant::MrisLtm;

  Millis t{0};
  w.append(t, EventKind::SessionStarted, detail::session_started_payload(cfg, trials, Mode::Simulated));

  if (two_robots && cfg.inter_robot_script) {
    for (auto& e : run_inter_robot_script(cfg, &model, src.seed, t)) {
      w.append(e.t, e.kind, std::move(e.payload));
      t = e.t + kExchangeDuration;
    }
  }

  sim::Rng session_rng = sim::Rng::stream(src.seed, kSessionStream);
  int aborted = 0;
  for (int trial = 1; trial <= trials; ++trial) {
    // Fixed for the whole trial: which monitor is the target, or in the
    // two-robot set-up, which robot prompts.
    const int side = session_rng.uniform_int(0, 1);
    const int robot = two_robots ? side + 1 : 1;
    const GazeTarget expected = two_robots ? robot_target(robot) : GazeTarget::TargetMonitor;

    json started = {{"trial", trial}, {"expected_gaze", std::string(to_string(expected))}};
    if (two_robots) {
      started["target_robot"] = robot;
    } else {
      started["target_side"] = side == 0 ? "left" : "right";
    }
    w.append(t, EventKind::TrialStarted, std::move(started));

    sim::Rng rng = sim::Rng::stream(src.seed, static_cast<std::uint64_t>(trial));
    TrialMachine machine(cfg, robot);
    int attempt = 0;
    while (!machine.finished()) {
      const PromptSpec prompt = machine.current_prompt();
      const Millis prompt_t = t;
      w.append(prompt_t, EventKind::PromptIssued,
               prompt_payload(trial, ++attempt, prompt, cfg, machine.local_counter(), machine.global_counter()));

      const auto sample = sim::sample_response(model, prompt, expected, cfg.response_window, rng);
      const Response resp = classify_behavior(sample, expected, cfg.response_window, cfg.torso_threshold_degrees);
      const bool observed = resp.classification != Classification::Timeout;
      const bool hit = resp.classification == Classification::Hit;

      // Gaze over the part of the window the trial actually spent: idle until
      // the response, then on the response target until the window closes.
      const Millis idle_for = observed ? sample.latency : cfg.response_window;
      auto gaze = detail::idle_gaze(model, idle_for, rng);
      if (observed && !hit && sample.latency < cfg.response_window) {
        gaze.push_back({sample.latency, cfg.response_window, sample.gaze_target});
      }

      if (observed) {
        w.append(prompt_t + sample.latency, EventKind::BehaviorObserved,
                 {{"trial", trial},
                  {"attempt", attempt},
                  {"gaze_target", std::string(to_string(sample.gaze_target))},
                  {"latency_ms", sample.latency.count()},
                  {"torso_deg", sample.torso_rotation_degrees}});
      }
      const Millis decided = observed ? prompt_t + sample.latency : prompt_t + cfg.response_window;
      w.append(decided, EventKind::ResponseClassified,
               {{"trial", trial},
                {"attempt", attempt},
                {"classification", std::string(to_string(resp.classification))},
                {"latency_ms", observed ? json(resp.latency.count()) : json(nullptr)},
                {"rating", resp.rating()},
                {"gaze", segments_to_json(offset(gaze, prompt_t))}});

      machine.submit(resp);
      if (hit) {
        w.append(decided, EventKind::RewardDelivered,
                 {{"trial", trial}, {"level", prompt.level}, {"duration_ms", cfg.reward_duration.count()}});
        t = decided + cfg.reward_duration;
      } else {
        t = prompt_t + cfg.response_window;
      }
    }
    const auto& outcome = machine.outcome();
    if (outcome.aborted) ++aborted;
    w.append(t, EventKind::TrialEnded,
             trial_ended_payload(trial, outcome, machine.local_counter(), machine.global_counter()));
  }

  if (two_robots && cfg.imitation_phase) {
    const auto r = simulate_imitation_gate(cfg, model, src.seed);
    w.append(t + r.waited, EventKind::ImitationActivated, imitation_payload(cfg, r, t));
    t += r.waited;
  }

  w.append(t, EventKind::SessionEnded,
           {{"trials_completed", trials - aborted},
            {"aborted_trials", aborted},
            {"reason", "completed"},
            {"header_digest", digest}});
  return w.take();
}

}  // namespace ltm::session
