#pragma once

// Operator-driven sessions. A human marks each response; the engine owns the
// clock, the protocol state and the log.
//
// All commands go through one queue into a single engine thread, so the log
// has exactly one writer. Events are stamped in ms since the session started;
// window closes and reward ends are stamped at their deadline, not at the
// moment the engine noticed them.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ltm/protocol.hpp"
#include "ltm/session/log.hpp"
#include "ltm/session/payload.hpp"
#include "ltm/session/simulate.hpp"
#include "ltm/sim/rng.hpp"

namespace ltm::session {

struct OperatorOptions {
  ProtocolConfig config = ProtocolConfig::defaults(Variant::LtmRi);
  int trials = 10;
  std::string operator_id = "operator";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> log_path;  // streamed as events happen
  Millis heartbeat_timeout{5000};
};

enum class Phase { WaitingForOperator, Script, WindowOpen, Reward, Paused, Ended };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::WaitingForOperator: return "waiting_for_operator";
    case Phase::Script: return "inter_robot_script";
    case Phase::WindowOpen: return "window_open";
    case Phase::Reward: return "reward";
    case Phase::Paused: return "paused";
    case Phase::Ended: return "ended";
  }
  return "?";
}

// An operator's judgement of one prompt. trial/attempt name the prompt the
// console was showing; when given, a mark for a prompt whose window has
// already closed is rejected instead of landing on the next prompt.
struct Mark {
  Classification classification = Classification::Hit;
  std::optional<Millis> latency_hint;
  std::optional<int> trial;
  std::optional<int> attempt;
};

struct CommandResult {
  bool accepted = true;
  std::string reason;

  static CommandResult ok() { return {}; }
  static CommandResult rejected(std::string why) { return {false, std::move(why)}; }
};

class OperatorSession {
 public:
  using Clock = std::chrono::steady_clock;
  using Listener = std::function<void(const json& snapshot)>;

  explicit OperatorSession(OperatorOptions opts)
      : opts_(validated(std::move(opts))),
        writer_(SessionHeader{opts_.config, opts_.seed, Mode::Operator,
                              {{"mode", "operator"}, {"operator", opts_.operator_id}, {"trials", opts_.trials}}}),
        session_rng_(sim::Rng::stream(opts_.seed, kSessionStream)) {
    if (opts_.log_path) sink_.emplace(*opts_.log_path, writer_.log().header);
    start_ = Clock::now();
    thread_ = std::thread([this] { loop(); });
  }

  ~OperatorSession() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  OperatorSession(const OperatorSession&) = delete;
  OperatorSession& operator=(const OperatorSession&) = delete;

  // Listeners run on the engine thread after every transition. They must not
  // issue commands themselves.
  void subscribe(Listener l) {
    std::lock_guard lk(mu_);
    listeners_.push_back(std::move(l));
  }

  CommandResult connect() {
    return submit([this] {
      if (connected_) return CommandResult::rejected("an operator is already connected");
      connected_ = true;
      touch();
      if (phase_ == Phase::WaitingForOperator) begin_session();
      else if (phase_ == Phase::Paused) next_trial_or_end(now());
      return CommandResult::ok();
    });
  }

  void disconnect(std::string why = "operator disconnected") {
    submit([this, why] {
      drop_operator(why);
      return CommandResult::ok();
    });
  }

  CommandResult heartbeat() {
    return submit([this] {
      touch();
      return CommandResult::ok();
    });
  }

  // The latency hint is the console's own estimate; the engine clock decides.
  CommandResult mark(const Mark& m) {
    return submit([this, m] {
      touch();
      if (m.classification == Classification::Timeout) return reject("Timeout is decided by the engine, not marked");
      const bool names_other = (m.trial && *m.trial != trial_) || (m.attempt && *m.attempt != attempt_);
      if (names_other || (phase_ != Phase::WindowOpen && (m.trial || m.attempt))) {
        return reject("response window closed for trial " + (m.trial ? std::to_string(*m.trial) : std::string("?")) +
                      " attempt " + (m.attempt ? std::to_string(*m.attempt) : std::string("?")));
      }
      if (phase_ != Phase::WindowOpen) return reject("no response window is open");
      const Millis t = now();
      if (t > window_deadline()) return reject("response window closed");
      record_mark(t, m.classification, m.latency_hint);
      return CommandResult::ok();
    });
  }

  CommandResult mark(Classification c, std::optional<Millis> latency_hint = std::nullopt) {
    return mark(Mark{c, latency_hint, std::nullopt, std::nullopt});
  }

  CommandResult override_level(int level) {
    return submit([this, level] {
      touch();
      if (phase_ != Phase::WindowOpen) return reject("no prompt to override");
      const int current = machine_->current_prompt().level;
      if (level <= current) {
        return reject("prompt level may only be raised (current " + std::to_string(current) + ")");
      }
      if (level > opts_.config.n_max) return reject("level beyond n_max " + std::to_string(opts_.config.n_max));
      machine_->override_level(level);
      issue_prompt(now(), true);
      return CommandResult::ok();
    });
  }

  CommandResult abort(std::string reason = "aborted by operator") {
    return submit([this, reason] {
      touch();
      if (phase_ == Phase::Ended) return reject("session already ended");
      const Millis t = now();
      if (phase_ == Phase::WaitingForOperator) emit(t, EventKind::SessionStarted, started_payload());
      if (machine_ && machine_->finished()) {
        // hit already rewarded; the pause is cut short
        record_trial_end(t);
      } else if (machine_) {
        end_trial_aborted(t, reason);
      }
      end_session(t, reason);
      return CommandResult::ok();
    });
  }

  json snapshot() const {
    std::lock_guard lk(mu_);
    return snapshot_locked();
  }

  SessionLog log() const {
    std::lock_guard lk(mu_);
    return writer_.log();
  }

  bool ended() const {
    std::lock_guard lk(mu_);
    return phase_ == Phase::Ended;
  }

  bool wait_until_ended(Millis timeout) {
    std::unique_lock lk(mu_);
    return ended_cv_.wait_for(lk, timeout, [this] { return phase_ == Phase::Ended; });
  }

  const OperatorOptions& options() const { return opts_; }

 private:
  struct Command {
    std::function<CommandResult()> run;
    std::promise<CommandResult> done;
  };

  static OperatorOptions validated(OperatorOptions o) {
    o.config.validate();
    require(o.trials >= 1, "operator session needs at least one trial");
    require(o.heartbeat_timeout.count() > 0, "heartbeat timeout must be positive");
    return o;
  }

  CommandResult submit(std::function<CommandResult()> fn) {
    Command cmd{std::move(fn), {}};
    auto fut = cmd.done.get_future();
    {
      std::lock_guard lk(mu_);
      queue_.push_back(std::move(cmd));
    }
    cv_.notify_all();
    return fut.get();
  }

  // ---- engine thread ------------------------------------------------------

  void loop() {
    std::unique_lock lk(mu_);
    while (true) {
      const auto deadline = next_deadline();
      if (deadline) {
        cv_.wait_until(lk, start_ + *deadline, [this] { return stop_ || !queue_.empty(); });
      } else {
        cv_.wait(lk, [this] { return stop_ || !queue_.empty(); });
      }
      if (stop_) break;
      bool changed = run_timers();
      while (!queue_.empty()) {
        Command cmd = std::move(queue_.front());
        queue_.pop_front();
        run_timers();
        CommandResult r;
        try {
          r = cmd.run();
        } catch (const std::exception& e) {
          r = CommandResult::rejected(e.what());
        }
        cmd.done.set_value(r);
        changed = true;
      }
      if (changed) publish(lk);
    }
    // Fail any command still waiting rather than leave its caller hanging.
    for (auto& c : queue_) c.done.set_value(CommandResult::rejected("session shut down"));
    queue_.clear();
  }

  Millis now() const { return std::chrono::duration_cast<Millis>(Clock::now() - start_); }

  std::optional<Millis> next_deadline() const {
    std::optional<Millis> d;
    auto consider = [&](Millis t) {
      if (!d || t < *d) d = t;
    };
    // the window includes its last millisecond
    if (phase_ == Phase::WindowOpen) consider(window_deadline() + Millis{1});
    if (phase_ == Phase::Reward) consider(reward_end_);
    if (phase_ == Phase::Script && !script_.empty()) consider(script_.front().t);
    if (phase_ == Phase::Script && script_.empty()) consider(script_end_);
    if (connected_ && phase_ != Phase::Ended) consider(last_seen_ + opts_.heartbeat_timeout);
    return d;
  }

  // Applies every deadline that has passed, in time order.
  bool run_timers() {
    bool changed = false;
    while (true) {
      const Millis t = now();
      if (phase_ == Phase::Script) {
        if (!script_.empty() && script_.front().t <= t) {
          auto e = std::move(script_.front());
          script_.pop_front();
          emit(e.t, e.kind, std::move(e.payload));
          changed = true;
          continue;
        }
        if (script_.empty() && script_end_ <= t) {
          if (connected_) {
            start_trial(script_end_);
          } else {
            phase_ = Phase::Paused;
          }
          changed = true;
          continue;
        }
      }
      if (phase_ == Phase::WindowOpen && window_deadline() < t) {
        close_window_timeout();
        changed = true;
        continue;
      }
      if (phase_ == Phase::Reward && reward_end_ <= t) {
        finish_trial(reward_end_);
        changed = true;
        continue;
      }
      if (connected_ && phase_ != Phase::Ended && last_seen_ + opts_.heartbeat_timeout <= t) {
        drop_operator("heartbeat timeout");
        changed = true;
        continue;
      }
      return changed;
    }
  }

  void publish(std::unique_lock<std::mutex>& lk) {
    ++version_;
    const json snap = snapshot_locked();
    auto listeners = listeners_;
    const bool done = phase_ == Phase::Ended;
    lk.unlock();
    for (auto& l : listeners) l(snap);
    if (done) ended_cv_.notify_all();
    lk.lock();
  }

  void touch() { last_seen_ = now(); }

  CommandResult reject(std::string why) {
    last_rejection_ = why;
    return CommandResult::rejected(std::move(why));
  }

  void emit(Millis t, EventKind kind, json payload) {
    const auto& e = writer_.append(std::max(t, last_t()), kind, std::move(payload));
    if (sink_) sink_->write(e);
  }

  Millis last_t() const { return writer_.log().events.empty() ? Millis{0} : writer_.log().events.back().t; }

  json started_payload() const {
    return {{"variant", std::string(to_string(opts_.config.variant))},
            {"trials", opts_.trials},
            {"mode", std::string(to_string(Mode::Operator))}};
  }

  void begin_session() {
    const Millis t = now();
    emit(t, EventKind::SessionStarted, started_payload());
    if (opts_.config.variant == Variant::MrisLtm && opts_.config.inter_robot_script) {
      for (auto& e : run_inter_robot_script(opts_.config, nullptr, opts_.seed, t)) script_.push_back(std::move(e));
      script_end_ = t + kExchangeDuration * static_cast<long>(script_.size());
      phase_ = Phase::Script;
      run_timers();
      return;
    }
    start_trial(t);
  }

  void start_trial(Millis t) {
    ++trial_;
    attempt_ = 0;
    const bool two_robots = opts_.config.variant == Variant::MrisLtm;
    const int side = session_rng_.uniform_int(0, 1);
    const int robot = two_robots ? side + 1 : 1;
    const GazeTarget expected = two_robots ? robot_target(robot) : GazeTarget::TargetMonitor;
    json started = {{"trial", trial_}, {"expected_gaze", std::string(to_string(expected))}};
    if (two_robots) {
      started["target_robot"] = robot;
    } else {
      started["target_side"] = side == 0 ? "left" : "right";
    }
    target_ = started;
    emit(t, EventKind::TrialStarted, std::move(started));
    machine_.emplace(opts_.config, robot);
    issue_prompt(t, false);
  }

  void issue_prompt(Millis t, bool overridden) {
    prompt_t_ = std::max(t, last_t());
    emit(prompt_t_, EventKind::PromptIssued,
         prompt_payload(trial_, ++attempt_, machine_->current_prompt(), opts_.config, machine_->local_counter(),
                        machine_->global_counter(), overridden));
    phase_ = Phase::WindowOpen;
  }

  Millis window_deadline() const { return prompt_t_ + opts_.config.response_window; }

  void record_mark(Millis t, Classification c, std::optional<Millis> hint) {
    const Millis latency = t - prompt_t_;
    json observed = {{"trial", trial_}, {"attempt", attempt_}, {"mark", std::string(to_string(c))},
                     {"latency_ms", latency.count()}};
    if (hint) observed["latency_hint_ms"] = hint->count();
    emit(t, EventKind::BehaviorObserved, std::move(observed));
    Response r{c, latency, GazeTarget::Elsewhere};
    emit(t, EventKind::ResponseClassified,
         {{"trial", trial_},
          {"attempt", attempt_},
          {"classification", std::string(to_string(c))},
          {"latency_ms", latency.count()},
          {"rating", r.rating()},
          {"gaze", nullptr}});
    const int level = machine_->current_prompt().level;
    machine_->submit(r);
    if (c == Classification::Hit) {
      emit(t, EventKind::RewardDelivered,
           {{"trial", trial_}, {"level", level}, {"duration_ms", opts_.config.reward_duration.count()}});
      reward_end_ = t + opts_.config.reward_duration;
      phase_ = Phase::Reward;
      return;
    }
    // A non-hit mark closes the window; the operator has judged this prompt.
    after_response(t);
  }

  void close_window_timeout() {
    const Millis t = window_deadline();
    emit(t, EventKind::ResponseClassified,
         {{"trial", trial_},
          {"attempt", attempt_},
          {"classification", "Timeout"},
          {"latency_ms", nullptr},
          {"rating", 0},
          {"gaze", nullptr}});
    machine_->submit({Classification::Timeout, opts_.config.response_window, GazeTarget::Elsewhere});
    after_response(t);
  }

  void after_response(Millis t) {
    if (machine_->finished()) {
      finish_trial(t);
    } else {
      issue_prompt(t, false);
    }
  }

  void record_trial_end(Millis t) {
    emit(t, EventKind::TrialEnded,
         trial_ended_payload(trial_, machine_->outcome(), machine_->local_counter(), machine_->global_counter()));
    history_.push_back(recorded_outcome(trial_, machine_->outcome()));
    if (machine_->outcome().aborted) ++aborted_;
    machine_.reset();
  }

  void finish_trial(Millis t) {
    record_trial_end(t);
    if (!connected_) {
      phase_ = Phase::Paused;
      return;
    }
    next_trial_or_end(t);
  }

  void next_trial_or_end(Millis t) {
    if (trial_ >= opts_.trials) {
      end_session(t, "completed");
    } else {
      start_trial(t);
    }
  }

  void end_trial_aborted(Millis t, const std::string& reason) {
    machine_->abort(reason);
    record_trial_end(t);
  }

  void end_session(Millis t, const std::string& reason) {
    script_.clear();
    emit(t, EventKind::SessionEnded,
         {{"trials_completed", trial_ - aborted_},
          {"aborted_trials", aborted_},
          {"reason", reason},
          {"header_digest", header_digest(writer_.log().header)}});
    phase_ = Phase::Ended;
  }

  void drop_operator(const std::string& why) {
    if (!connected_) return;
    connected_ = false;
    if (phase_ == Phase::WindowOpen) {
      // The trial cannot be judged any more; keep it in the log, flagged.
      end_trial_aborted(now(), why);
      phase_ = Phase::Paused;
    }
  }

  json snapshot_locked() const {
    const auto& cfg = opts_.config;
    json s = {
        {"version", version_},
        {"phase", std::string(to_string(phase_))},
        {"connected", connected_},
        {"variant", std::string(to_string(cfg.variant))},
        {"trials", opts_.trials},
        {"trial", trial_},
        {"now_ms", now().count()},
        {"n_max", cfg.n_max},
        {"last_event_seq", writer_.log().events.empty() ? json(nullptr) : json(writer_.log().events.back().seq)},
        {"last_rejection", last_rejection_ ? json(*last_rejection_) : json(nullptr)},
    };
    json history = json::array();
    for (const auto& h : history_) {
      history.push_back({{"trial", h.trial},
                         {"hit_level", h.hit_level ? json(*h.hit_level) : json(nullptr)},
                         {"aborted", h.aborted}});
    }
    s["history"] = history;
    s["target"] = machine_ ? target_ : json(nullptr);
    if (machine_ && !machine_->finished()) {
      const auto& p = machine_->current_prompt();
      s["prompt"] = prompt_payload(trial_, attempt_, p, cfg, machine_->local_counter(), machine_->global_counter());
    } else {
      s["prompt"] = nullptr;
    }
    const bool open = phase_ == Phase::WindowOpen;
    s["window"] = {
        {"open", open},
        {"length_ms", cfg.response_window.count()},
        {"opened_ms", open ? json(prompt_t_.count()) : json(nullptr)},
        {"deadline_ms", open ? json(window_deadline().count()) : json(nullptr)},
        {"remaining_ms", open ? json(std::max<std::int64_t>(0, (window_deadline() - now()).count())) : json(nullptr)},
    };
    s["counters"] = {
        {"local", machine_ ? machine_->local_counter() : 0},
        {"global", machine_ ? machine_->global_counter() : 0},
        {"attempts_at_level", machine_ ? machine_->attempts_at_level() : 0},
        {"attempts_per_level", cfg.attempts_per_level()},
        {"max_attempts", cfg.max_attempts},
    };
    s["reward_remaining_ms"] =
        phase_ == Phase::Reward ? json(std::max<std::int64_t>(0, (reward_end_ - now()).count())) : json(nullptr);
    return s;
  }

  OperatorOptions opts_;
  LogWriter writer_;
  std::optional<JsonlSink> sink_;
  sim::Rng session_rng_;
  Clock::time_point start_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable ended_cv_;
  std::deque<Command> queue_;
  std::vector<Listener> listeners_;
  bool stop_ = false;

  Phase phase_ = Phase::WaitingForOperator;
  bool connected_ = false;
  Millis last_seen_{0};
  std::uint64_t version_ = 0;
  std::optional<std::string> last_rejection_;

  std::deque<SessionEvent> script_;
  Millis script_end_{0};
  std::optional<TrialMachine> machine_;
  json target_;
  int trial_ = 0;
  int attempt_ = 0;
  int aborted_ = 0;
  Millis prompt_t_{0};
  Millis reward_end_{0};
  std::vector<RecordedOutcome> history_;

  std::thread thread_;  // last: starts after everything above is built
};

}  // namespace ltm::session
