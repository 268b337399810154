#pragma once

// Replay and derivation.
//
// derive() walks a log with a fresh TrialMachine and checks that every
// recorded prompt, classification and trial result is what the engine would
// produce from the recorded observations. replay() additionally re-runs a
// simulated session from its header and compares event for event.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/protocol.hpp"
#include "ltm/session/log.hpp"
#include "ltm/session/payload.hpp"
#include "ltm/session/simulate.hpp"
#include "ltm/stats/intensity.hpp"

namespace ltm::session {

class ReplayError : public std::runtime_error {
 public:
  ReplayError(std::uint64_t seq, const std::string& what)
      : std::runtime_error("replay diverged at seq " + std::to_string(seq) + ": " + what), seq_(seq) {}
  std::uint64_t seq() const { return seq_; }

 private:
  std::uint64_t seq_;
};

struct DerivedSession {
  std::vector<RecordedOutcome> trials;  // aborted trials included, flagged
  std::vector<stats::GazeSegment> window_gaze;
  std::vector<stats::GazeSegment> script_gaze;
  std::vector<stats::GazeSegment> imitation_gaze;
  std::optional<int> imitation_robot;

  // Aborted trials are kept in the log but left out of every metric.
  std::vector<TrialOutcome> scored_outcomes() const {
    std::vector<TrialOutcome> out;
    for (const auto& t : trials) {
      if (!t.aborted) out.push_back(t.to_outcome());
    }
    return out;
  }
};

namespace detail {

struct Deriver {
  const SessionLog& log;
  const ProtocolConfig& cfg;
  DerivedSession out;

  std::optional<TrialMachine> machine;
  int trial = 0;
  int attempt = 0;
  Millis prompt_t{0};
  GazeTarget expected = GazeTarget::TargetMonitor;
  std::optional<Response> observed;
  std::optional<Classification> last_classification;
  int aborted = 0;

  explicit Deriver(const SessionLog& l) : log(l), cfg(l.header.config) {}

  [[noreturn]] void fail(const SessionEvent& e, const std::string& why) const { throw ReplayError(e.seq, why); }

  void expect(bool ok, const SessionEvent& e, const std::string& why) const {
    if (!ok) fail(e, why);
  }

  void run() {
    if (log.events.empty()) throw ReplayError(0, "log has no events");
    for (std::size_t i = 0; i < log.events.size(); ++i) {
      const auto& e = log.events[i];
      expect(e.seq == i, e, "seq not gap-free");
      if (i > 0) expect(e.t >= log.events[i - 1].t, e, "timestamp decreases");
      expect((i == 0) == (e.kind == EventKind::SessionStarted), e, "SessionStarted must open the log");
      try {
        step(e, i + 1 == log.events.size());
      } catch (const ReplayError&) {
        throw;
      } catch (const std::exception& ex) {
        fail(e, ex.what());
      }
    }
    if (!log.ended()) throw ReplayError(log.events.size(), "log ends without SessionEnded");
  }

  void step(const SessionEvent& e, bool last) {
    const json& p = e.payload;
    switch (e.kind) {
      case EventKind::SessionStarted:
        expect(p.at("variant") == std::string(to_string(cfg.variant)), e, "variant differs from header");
        break;

      case EventKind::InterRobotExchange:
        expect(!machine, e, "inter-robot exchange inside a trial");
        for (const auto& s : segments_from_json(p.at("gaze"))) out.script_gaze.push_back(s);
        break;

      case EventKind::ImitationActivated:
        expect(!machine, e, "imitation phase inside a trial");
        if (!p.at("robot").is_null()) out.imitation_robot = p.at("robot").get<int>();
        for (const auto& s : segments_from_json(p.at("gaze"))) out.imitation_gaze.push_back(s);
        break;

      case EventKind::TrialStarted: {
        expect(!machine, e, "trial started before the previous one ended");
        expect(p.at("trial") == trial + 1, e, "trial numbers not consecutive");
        ++trial;
        attempt = 0;
        const int robot = p.contains("target_robot") ? p.at("target_robot").get<int>() : 1;
        expected = parse_gaze_target(p.at("expected_gaze").get<std::string>());
        if (cfg.variant == Variant::MrisLtm) {
          expect(expected == robot_target(robot), e, "expected gaze is not the prompting robot");
        } else {
          expect(expected == GazeTarget::TargetMonitor, e, "expected gaze is not the target monitor");
        }
        machine.emplace(cfg, robot);
        break;
      }

      case EventKind::PromptIssued: {
        expect(machine && !machine->finished(), e, "prompt outside a running trial");
        expect(!observed, e, "prompt issued while a response was pending");
        const bool overridden = p.value("override", false);
        if (overridden) machine->override_level(p.at("level").get<int>());
        const auto want = prompt_payload(trial, ++attempt, machine->current_prompt(), cfg, machine->local_counter(),
                                         machine->global_counter(), overridden);
        expect(p == want, e, "prompt differs from the protocol's next prompt");
        prompt_t = e.t;
        last_classification.reset();
        break;
      }

      case EventKind::BehaviorObserved: {
        expect(machine && !machine->finished(), e, "observation outside a running trial");
        expect(p.at("trial") == trial && p.at("attempt") == attempt, e, "observation for the wrong prompt");
        expect(!observed && !last_classification, e, "second observation for one prompt");
        expect(e.t >= prompt_t && e.t <= prompt_t + cfg.response_window, e, "observation outside the response window");
        const Millis latency{p.at("latency_ms").get<std::int64_t>()};
        expect(latency == e.t - prompt_t, e, "latency disagrees with timestamps");
        Response r;
        if (p.contains("mark")) {
          r.classification = parse_classification(p.at("mark").get<std::string>());
          expect(r.classification != Classification::Timeout, e, "operator cannot mark a timeout");
          r.latency = latency;
        } else {
          const BehaviorSample s{parse_gaze_target(p.at("gaze_target").get<std::string>()), latency,
                                 p.at("torso_deg").get<double>()};
          r = classify_behavior(s, expected, cfg.response_window, cfg.torso_threshold_degrees);
        }
        observed = r;
        break;
      }

      case EventKind::ResponseClassified: {
        expect(machine && !machine->finished(), e, "classification outside a running trial");
        expect(p.at("trial") == trial && p.at("attempt") == attempt, e, "classification for the wrong prompt");
        expect(!last_classification, e, "prompt classified twice");
        Response r;
        if (observed) {
          r = *observed;
          expect(e.t == prompt_t + r.latency, e, "classification not stamped at the observation");
        } else {
          r.classification = Classification::Timeout;
          r.latency = cfg.response_window;
          expect(e.t == prompt_t + cfg.response_window, e, "timeout not stamped at window close");
        }
        expect(p.at("classification") == std::string(to_string(r.classification)), e, "classification differs");
        expect(p.at("rating") == r.rating(), e, "rating differs");
        expect(p.at("latency_ms") == (observed ? json(r.latency.count()) : json(nullptr)), e, "latency differs");
        for (const auto& s : segments_from_json(p.at("gaze"))) {
          expect(s.begin >= prompt_t && s.end <= prompt_t + cfg.response_window, e, "gaze outside the window");
          out.window_gaze.push_back(s);
        }
        observed.reset();
        last_classification = r.classification;
        machine->submit(r);
        break;
      }

      case EventKind::RewardDelivered:
        expect(machine && last_classification == Classification::Hit, e, "reward without a hit");
        expect(p.at("trial") == trial, e, "reward for the wrong trial");
        expect(p.at("level") == *machine->outcome().hit_level, e, "reward level differs from hit level");
        expect(p.at("duration_ms") == cfg.reward_duration.count(), e, "reward duration differs");
        break;

      case EventKind::TrialEnded: {
        expect(machine.has_value(), e, "trial end without a trial");
        expect(!observed, e, "trial ended with an unclassified observation");
        if (!machine->finished()) {
          expect(p.at("aborted") == true, e, "trial ended early without being aborted");
          machine->abort(p.value("abort_reason", "aborted"));
        }
        const auto want = trial_ended_payload(trial, machine->outcome(), machine->local_counter(),
                                              machine->global_counter());
        expect(p == want, e, "trial result differs from re-derived outcome");
        if (machine->outcome().rewarded) {
          const auto& prev = log.events[e.seq - 1];
          expect(prev.kind == EventKind::RewardDelivered || p.at("aborted") == true, e, "hit trial not rewarded");
        }
        out.trials.push_back(recorded_outcome(trial, machine->outcome()));
        if (machine->outcome().aborted) ++aborted;
        machine.reset();
        break;
      }

      case EventKind::SessionEnded:
        expect(last, e, "events after SessionEnded");
        expect(!machine, e, "session ended inside a trial");
        expect(p.at("header_digest") == header_digest(log.header), e, "header digest differs");
        expect(p.at("trials_completed") == trial - aborted, e, "completed trial count differs");
        expect(p.at("aborted_trials") == aborted, e, "aborted trial count differs");
        break;
    }
  }
};

}  // namespace detail

inline DerivedSession derive(const SessionLog& log) {
  detail::Deriver d(log);
  d.run();
  return std::move(d.out);
}

inline int planned_trials(const SessionHeader& h) { return h.participant.at("trials").get<int>(); }

// Simulated logs are regenerated from the header and must match exactly;
// operator logs are re-derived from their observations. Returns the
// verified log.
inline SessionLog replay(const SessionLog& log) {
  if (log.header.mode == Mode::Simulated) {
    Simulated src{model_from_json(log.header.participant.at("model")), log.header.seed,
                  log.header.participant.value("session", 0)};
    SessionLog regenerated = run_session(log.header.config, planned_trials(log.header), src);
    const auto& a = log.events;
    const auto& b = regenerated.events;
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
      if (i >= a.size()) throw ReplayError(i, "log is truncated");
      if (i >= b.size()) throw ReplayError(i, "log has extra events");
      if (event_to_json(a[i]) != event_to_json(b[i])) {
        throw ReplayError(i, std::string(to_string(a[i].kind)) + " differs from regenerated " +
                                 std::string(to_string(b[i].kind)));
      }
    }
    derive(regenerated);
    return regenerated;
  }
  derive(log);
  return log;
}

}  // namespace ltm::session
