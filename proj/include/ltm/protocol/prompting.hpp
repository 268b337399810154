#pragma once

#include <exception>
#include <functional>
#include <string>
#include <utility>
#include <variant>

#include "ltm/error.hpp"
#include "ltm/protocol/stimulus.hpp"
#include "ltm/protocol/types.hpp"

namespace ltm {

struct Terminate {
  friend bool operator==(const Terminate&, const Terminate&) = default;
};

using NextPrompt = std::variant<PromptSpec, Terminate>;

// PF lookup: the prompt a given level stands for.
inline PromptSpec make_prompt(const ProtocolConfig& cfg, int level, int robot_index = 1) {
  require(robot_index == 1 || robot_index == 2, "robot index must be 1 or 2");
  const PfEntry& row = cfg.pf(level);
  PromptSpec p;
  p.level = level;
  p.robot_action = {StimulusKind::RobotAction, row.ra_rank};
  p.env_factor = {StimulusKind::EnvFactor, row.ef_rank};
  p.robot_index = robot_index;
  if (cfg.variant == Variant::MrisLtm) p.stimulus_combo = stimulus_set(row.ra_rank);
  return p;
}

// Prompting function, consulted after a non-hit. `local_counter` is the number
// of prompts already given at prev.level (1-based). LtmRi and MrisLtm move one
// level up on every miss; ImprovedLtmMri repeats the level until max_attempts
// prompts have been spent on it.
inline NextPrompt next_prompt(const PromptSpec& prev, const Response& resp, int local_counter,
                              const ProtocolConfig& cfg) {
  require(resp.classification != Classification::Hit, "next_prompt(): only consulted after a non-hit");
  require(prev.level >= 1 && prev.level <= cfg.n_max, "next_prompt(): previous level outside 1..n_max");
  require(local_counter >= 1, "next_prompt(): local_counter counts the prompt just given");

  const int per_level = cfg.attempts_per_level();
  if (local_counter < per_level) return make_prompt(cfg, prev.level, prev.robot_index);
  if (prev.level == cfg.n_max) return Terminate{};
  return make_prompt(cfg, prev.level + 1, prev.robot_index);
}

// One trial as an explicit state machine so both the batch runner and the
// operator console can drive it one response at a time.
//
// Counter bookkeeping follows the improved algorithm: every response bumps the
// local counter; when it reaches the per-level limit it resets to 0, the global
// counter increments and the level advances. The escalation score is
// global * limit + local, which equals the number of prompts issued.
class TrialMachine {
 public:
  explicit TrialMachine(ProtocolConfig cfg, int robot_index = 1)
      : cfg_(validated(std::move(cfg))), current_(make_prompt(cfg_, 1, robot_index)) {}

  const ProtocolConfig& config() const { return cfg_; }
  bool finished() const { return finished_; }
  const PromptSpec& current_prompt() const {
    require(!finished_, "trial already finished");
    return current_;
  }
  int local_counter() const { return local_; }
  int global_counter() const { return global_; }
  int prompts_issued() const { return static_cast<int>(outcome_.attempts.size()); }
  int attempts_at_level() const { return at_level_; }

  void submit(const Response& resp) {
    require(!finished_, "trial already finished");
    outcome_.attempts.push_back({current_, resp});
    ++at_level_;

    const int limit = cfg_.attempts_per_level();
    ++local_;
    if (local_ == limit) {
      local_ = 0;
      ++global_;
    }

    if (resp.classification == Classification::Hit) {
      outcome_.hit_level = current_.level;
      outcome_.rewarded = true;
      finish();
      return;
    }

    auto next = next_prompt(current_, resp, at_level_, cfg_);
    if (std::holds_alternative<Terminate>(next)) {
      finish();
      return;
    }
    auto& prompt = std::get<PromptSpec>(next);
    if (prompt.level != current_.level) at_level_ = 0;
    current_ = prompt;
  }

  // Operator escalation. Levels only ever move up within a trial.
  void override_level(int level) {
    require(!finished_, "trial already finished");
    require(level > current_.level, "prompt level may only be raised");
    require(level <= cfg_.n_max, "override beyond n_max");
    current_ = make_prompt(cfg_, level, current_.robot_index);
    at_level_ = 0;
    local_ = 0;
  }

  void abort(std::string reason) {
    if (finished_) return;
    outcome_.aborted = true;
    outcome_.abort_reason = std::move(reason);
    finish();
  }

  const TrialOutcome& outcome() const {
    require(finished_, "trial still running");
    return outcome_;
  }

 private:
  static ProtocolConfig validated(ProtocolConfig cfg) {
    cfg.validate();
    return cfg;
  }

  void finish() {
    finished_ = true;
    outcome_.prompts_issued = static_cast<int>(outcome_.attempts.size());
    outcome_.escalation_score = global_ * cfg_.attempts_per_level() + local_;
  }

  ProtocolConfig cfg_;
  PromptSpec current_;
  TrialOutcome outcome_;
  int local_ = 0;
  int global_ = 0;
  int at_level_ = 0;
  bool finished_ = false;
};

using Responder = std::function<Response(const PromptSpec&)>;

// Steps 1-3: weakest prompt first, reward and stop on a hit, otherwise consult
// the prompting function until it terminates. A throwing responder aborts the
// trial instead of propagating.
inline TrialOutcome run_trial(const ProtocolConfig& cfg, const Responder& responder, int robot_index = 1) {
  TrialMachine machine(cfg, robot_index);
  while (!machine.finished()) {
    Response resp;
    try {
      resp = responder(machine.current_prompt());
    } catch (const std::exception& e) {
      machine.abort(std::string("responder failure: ") + e.what());
      break;
    } catch (...) {
      machine.abort("responder failure");
      break;
    }
    machine.submit(resp);
  }
  return machine.outcome();
}

}  // namespace ltm
