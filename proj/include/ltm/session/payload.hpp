#pragma once

// Event payload builders shared by the simulated runner and the operator
// engine, plus their readers for replay and reporting.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltm/protocol/types.hpp"
#include "ltm/session/json_io.hpp"
#include "ltm/stats/intensity.hpp"

namespace ltm::session {

inline json segments_to_json(const std::vector<stats::GazeSegment>& segs) {
  json out = json::array();
  for (const auto& s : segs) out.push_back({s.begin.count(), s.end.count(), std::string(to_string(s.target))});
  return out;
}

inline std::vector<stats::GazeSegment> segments_from_json(const json& j) {
  std::vector<stats::GazeSegment> out;
  if (j.is_null()) return out;
  for (const auto& row : j) {
    out.push_back({Millis{row.at(0).get<std::int64_t>()}, Millis{row.at(1).get<std::int64_t>()},
                   parse_gaze_target(row.at(2).get<std::string>())});
  }
  return out;
}

// Shift a relative trace onto the session clock.
inline std::vector<stats::GazeSegment> offset(std::vector<stats::GazeSegment> segs, Millis by) {
  for (auto& s : segs) {
    s.begin += by;
    s.end += by;
  }
  return segs;
}

inline json prompt_payload(int trial, int attempt, const PromptSpec& p, const ProtocolConfig& cfg, int local_counter,
                           int global_counter, bool overridden = false) {
  json j = {
      {"trial", trial},
      {"attempt", attempt},
      {"level", p.level},
      {"robot_action", {{"rank", p.robot_action.rank}, {"label", cfg.ra_catalog.at(p.robot_action.rank - 1)}}},
      {"env_factor", {{"rank", p.env_factor.rank}, {"label", cfg.ef_catalog.at(p.env_factor.rank - 1)}}},
      {"robot", p.robot_index},
      {"local_counter", local_counter},
      {"global_counter", global_counter},
      {"window_ms", cfg.response_window.count()},
  };
  if (p.stimulus_combo) j["stimulus_combo"] = p.stimulus_combo->j;
  if (overridden) j["override"] = true;
  return j;
}

inline json trial_ended_payload(int trial, const TrialOutcome& o, int local_counter, int global_counter) {
  json j = {
      {"trial", trial},
      {"hit_level", o.hit_level ? json(*o.hit_level) : json(nullptr)},
      {"prompts_issued", o.prompts_issued},
      {"escalation_score", o.escalation_score},
      {"rewarded", o.rewarded},
      {"aborted", o.aborted},
      {"local_counter", local_counter},
      {"global_counter", global_counter},
  };
  if (o.aborted) j["abort_reason"] = o.abort_reason;
  return j;
}

// The parts of a TrialOutcome recorded in TrialEnded.
struct RecordedOutcome {
  int trial = 0;
  std::optional<int> hit_level;
  int prompts_issued = 0;
  int escalation_score = 0;
  bool rewarded = false;
  bool aborted = false;

  friend bool operator==(const RecordedOutcome&, const RecordedOutcome&) = default;

  TrialOutcome to_outcome() const {
    TrialOutcome o;
    o.hit_level = hit_level;
    o.prompts_issued = prompts_issued;
    o.escalation_score = escalation_score;
    o.rewarded = rewarded;
    o.aborted = aborted;
    return o;
  }
};

inline RecordedOutcome recorded_outcome(const json& p) {
  RecordedOutcome r;
  r.trial = p.at("trial").get<int>();
  if (!p.at("hit_level").is_null()) r.hit_level = p.at("hit_level").get<int>();
  r.prompts_issued = p.at("prompts_issued").get<int>();
  r.escalation_score = p.at("escalation_score").get<int>();
  r.rewarded = p.at("rewarded").get<bool>();
  r.aborted = p.at("aborted").get<bool>();
  return r;
}

inline RecordedOutcome recorded_outcome(int trial, const TrialOutcome& o) {
  return {trial, o.hit_level, o.prompts_issued, o.escalation_score, o.rewarded, o.aborted};
}

}  // namespace ltm::session
