#pragma once

// ltmctl: simulate, report, replay, serve.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <atomic>
#include <csignal>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ltm/cli/plan.hpp"
#include "ltm/cli/report.hpp"
#include "ltm/session/server.hpp"
#include "ltm/session/simulate.hpp"

namespace ltm::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Protocol settings shared by simulate and serve.
struct ProtocolFlags {
  std::optional<fs::path> config;
  std::vector<std::string> variants;
  std::optional<int> max_attempts;
};

inline std::vector<ProtocolConfig> resolve_configs(const ProtocolFlags& f) {
  std::optional<json> doc;
  if (f.config) doc = read_json_file(*f.config);
  std::vector<Variant> variants;
  for (const auto& name : f.variants) {
    try {
      variants.push_back(parse_variant(name));
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
  if (variants.empty()) {
    variants.push_back(doc && doc->contains("variant") ? parse_variant(doc->at("variant").get<std::string>())
                                                       : Variant::LtmRi);
  }
  if (doc && doc->contains("variant")) {
    const auto named = doc->at("variant").get<std::string>();
    for (auto v : variants) {
      if (to_string(v) != named) {
        throw UsageError("--variant " + std::string(to_string(v)) + " contradicts the config file (" + named + ")");
      }
    }
  }
  std::vector<ProtocolConfig> out;
  for (auto v : variants) {
    auto cfg = doc ? config_from_json(*doc, v) : ProtocolConfig::defaults(v);
    if (f.max_attempts) cfg.max_attempts = *f.max_attempts;
    try {
      cfg.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    out.push_back(std::move(cfg));
  }
  return out;
}

inline void add_protocol_flags(CLI::App& cmd, ProtocolFlags& f, bool many_variants) {
  cmd.add_option("--config", f.config, "protocol config (JSON)")->check(CLI::ExistingFile);
  auto* v = cmd.add_option("--variant", f.variants, "ltm-ri | mris | improved")
                ->check(CLI::IsMember({"ltm-ri", "mris", "improved"}));
  if (!many_variants) v->expected(1);
  cmd.add_option("--max-attempts", f.max_attempts, "prompts per level before escalating (improved)")
      ->check(CLI::PositiveNumber);
}

// Fails before any work if `dir` cannot take new files.
inline void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".ltm-write-probe";
  {
    std::ofstream out(probe);
    if (!out) throw std::runtime_error("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---- simulate -------------------------------------------------------------

struct SimulateResult {
  std::vector<fs::path> logs;
  json summary;
};

inline SimulateResult cmd_simulate(const ExperimentPlan& plan, int jobs) {
  const auto sessions = expand(plan);
  ensure_writable(plan.output_dir);

  std::vector<session::SessionLog> logs(sessions.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < sessions.size(); i = next++) {
      try {
        const auto& ps = sessions[i];
        logs[i] = session::run_session(plan.configs[ps.config], plan.trials_per_session,
                                       session::Simulated{ps.model, ps.seed, ps.session});
        session::write_log(logs[i], plan.output_dir / ps.file);
      } catch (...) {
        std::lock_guard lk(failure_mu);
        if (!failure) failure = std::current_exception();
        next = sessions.size();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(n, sessions.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<NamedLog> named;
  SimulateResult result;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    named.push_back({sessions[i].file, std::move(logs[i])});
    result.logs.push_back(plan.output_dir / sessions[i].file);
  }
  const auto summaries = summarize(named, /*allow_mixed=*/true, /*verify=*/false);
  result.summary = build_report(summaries);
  json variants = json::array();
  for (const auto& c : plan.configs) variants.push_back(std::string(to_string(c.variant)));
  json cohort = json::array();
  for (const auto& m : plan.cohort) cohort.push_back(model_to_json(m));
  result.summary["plan"] = {{"seed_base", plan.seed_base},
                            {"sessions", plan.sessions_per_participant},
                            {"trials", plan.trials_per_session},
                            {"variants", variants},
                            {"cohort", cohort}};
  write_text(plan.output_dir / "summary.json", result.summary.dump(2) + "\n");
  write_text(plan.output_dir / "summary.csv", report_csv(summaries));
  return result;
}

// ---- report ---------------------------------------------------------------

inline std::vector<NamedLog> load_logs(const std::vector<fs::path>& paths) {
  std::vector<NamedLog> out;
  for (const auto& p : paths) out.push_back({p.filename().string(), session::read_log(p)});
  return out;
}

inline json cmd_report(const std::vector<fs::path>& paths, bool allow_mixed, const fs::path& output_dir) {
  const auto summaries = summarize(load_logs(paths), allow_mixed);
  ensure_writable(output_dir);
  auto doc = build_report(summaries);
  write_text(output_dir / "report.json", doc.dump(2) + "\n");
  write_text(output_dir / "report.csv", report_csv(summaries));
  return doc;
}

// ---- serve ----------------------------------------------------------------

namespace detail {
inline std::atomic<bool> g_interrupted{false};
inline void on_signal(int) { g_interrupted = true; }
}  // namespace detail

// ---- entry point ----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Least-to-most prompting sessions: simulate, report, replay, serve", "ltmctl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ltmctl 0.1.0");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run a simulated cohort and write logs plus a summary");
  ProtocolFlags sim_proto;
  add_protocol_flags(*sim_cmd, sim_proto, true);
  std::optional<fs::path> plan_path;
  std::optional<fs::path> model_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> sessions;
  int participants = 1;
  std::optional<double> learning_rate;
  int jobs = 1;
  fs::path sim_out = ".";
  sim_cmd->add_option("--plan", plan_path, "plan file: cohort of participant models (JSON)")->check(CLI::ExistingFile);
  sim_cmd->add_option("--model", model_path, "participant model for a uniform cohort (JSON)")
      ->check(CLI::ExistingFile)
      ->excludes("--plan");
  sim_cmd->add_option("--participants", participants, "uniform cohort size")->check(CLI::PositiveNumber)->excludes(
      "--plan");
  sim_cmd->add_option("--seed", seed, "seed base");
  sim_cmd->add_option("--trials", trials, "trials per session")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--sessions", sessions, "sessions per participant")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--learning-rate", learning_rate, "odds multiplier applied between sessions")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--jobs", jobs, "sessions run in parallel")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--output-dir", sim_out, "where logs and summary go");

  // report
  auto* report_cmd = app.add_subcommand("report", "intensity, looking time and tests over session logs");
  std::vector<fs::path> report_logs;
  bool allow_mixed = false;
  fs::path report_out = ".";
  report_cmd->add_option("logs", report_logs, "session logs (JSONL)")->required()->check(CLI::ExistingFile);
  report_cmd->add_flag("--allow-mixed", allow_mixed, "report logs of different variants together");
  report_cmd->add_option("--output-dir", report_out, "where report.json and report.csv go");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "verify session logs by replaying them");
  std::vector<fs::path> replay_logs;
  replay_cmd->add_option("logs", replay_logs, "session logs (JSONL)")->required()->check(CLI::ExistingFile);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run an operator session behind the control channel");
  ProtocolFlags serve_proto;
  add_protocol_flags(*serve_cmd, serve_proto, false);
  std::string bind = "127.0.0.1";
  unsigned short port = 8080;
  std::optional<fs::path> assets;
  std::optional<fs::path> serve_log;
  fs::path serve_out = ".";
  int serve_trials = 10;
  std::uint64_t serve_seed = 0;
  std::string operator_id = "operator";
  serve_cmd->add_option("--bind", bind, "listen address");
  serve_cmd->add_option("--port", port, "listen port (0 picks one)");
  serve_cmd->add_option("--assets", assets, "console static files")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--trials", serve_trials, "trials in the session")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--seed", serve_seed, "seed for target sides");
  serve_cmd->add_option("--operator-id", operator_id, "recorded in the log header");
  serve_cmd->add_option("--log", serve_log, "log path (default <output-dir>/operator_<variant>_<seed>.jsonl)");
  serve_cmd->add_option("--output-dir", serve_out, "where the log goes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim_cmd) {
      ExperimentPlan plan;
      plan.configs = resolve_configs(sim_proto);
      plan.output_dir = sim_out;
      if (plan_path) {
        auto f = plan_from_json(read_json_file(*plan_path));
        plan.cohort = std::move(f.cohort);
        if (f.sessions) plan.sessions_per_participant = *f.sessions;
        if (f.trials) plan.trials_per_session = *f.trials;
        if (f.seed_base) plan.seed_base = *f.seed_base;
      } else {
        const auto base = model_path ? model_from_json(read_json_file(*model_path)) : sim::ParticipantModel{};
        plan.cohort = uniform_cohort(base, participants);
      }
      if (sessions) plan.sessions_per_participant = *sessions;
      if (trials) plan.trials_per_session = *trials;
      if (seed) plan.seed_base = *seed;
      if (learning_rate) {
        for (auto& m : plan.cohort) m.learning_rate = *learning_rate;
      }
      try {
        validate(plan);
      } catch (const ContractViolation& e) {
        throw UsageError(e.what());
      }
      const auto result = cmd_simulate(plan, jobs);
      out << "wrote " << result.logs.size() << " session logs, summary.json and summary.csv to "
          << plan.output_dir.string() << "\n";
      for (const auto& r : result.summary.at("records")) {
        if (r.at("metric") == "avg_hit_prompt_level" && r.at("scope").at("participant") == "*") {
          out << "  " << r.at("scope").at("variant").get<std::string>() << " session "
              << r.at("scope").at("session") << ": mean hit level " << r.at("value").dump() << "\n";
        }
        if (r.at("metric") == "signed_rank_first_vs_last_p") {
          out << "  " << r.at("scope").at("variant").get<std::string>()
              << " signed-rank first vs last: p = " << r.at("value").dump() << " (" << r.at("method").get<std::string>()
              << ", n = " << r.at("n") << ")\n";
        }
      }
      return kExitOk;
    }

    if (*report_cmd) {
      const auto doc = cmd_report(report_logs, allow_mixed, report_out);
      out << "report over " << doc.at("inputs").size() << " session(s): " << doc.at("records").size()
          << " records in " << (report_out / "report.json").string() << " and report.csv\n";
      return kExitOk;
    }

    if (*replay_cmd) {
      int status = kExitOk;
      for (const auto& p : replay_logs) {
        try {
          const auto log = session::replay(session::read_log(p));
          const auto d = session::derive(log);
          out << "ok " << p.string() << ": " << log.events.size() << " events, " << d.trials.size() << " trials ("
              << to_string(log.header.mode) << ")\n";
          for (const auto& t : d.trials) {
            out << "  trial " << t.trial << ": "
                << (t.aborted ? std::string("aborted")
                              : t.hit_level ? "hit at level " + std::to_string(*t.hit_level) : std::string("no hit"))
                << ", " << t.prompts_issued << " prompt(s), score " << t.escalation_score << "\n";
          }
        } catch (const session::ReplayError& e) {
          err << p.string() << ": replay diverged at seq " << e.seq() << ": " << e.what() << "\n";
          status = kExitRuntime;
        }
      }
      return status;
    }

    if (*serve_cmd) {
      const auto cfg = resolve_configs(serve_proto).front();
      const auto log_path = serve_log ? *serve_log
                                      : serve_out / ("operator_" + std::string(to_string(cfg.variant)) + "_" +
                                                     std::to_string(serve_seed) + ".jsonl");
      ensure_writable(log_path.parent_path().empty() ? fs::path(".") : log_path.parent_path());
      session::Operator src;
      src.session.operator_id = operator_id;
      src.session.seed = serve_seed;
      src.session.log_path = log_path;
      src.server.bind = bind;
      src.server.port = port;
      src.server.assets = assets;
      src.on_listening = [&](unsigned short p) {
        out << "listening on http://" << bind << ":" << p << " (control channel ws://" << bind << ":" << p
            << session::kControlPath << ")\n"
            << "logging to " << log_path.string() << std::endl;
      };
      detail::g_interrupted = false;
      src.interrupted = [] { return detail::g_interrupted.load(); };
      auto prev_int = std::signal(SIGINT, detail::on_signal);
      auto prev_term = std::signal(SIGTERM, detail::on_signal);
      session::SessionLog log;
      try {
        log = session::run_session(cfg, serve_trials, std::move(src));
      } catch (...) {
        std::signal(SIGINT, prev_int);
        std::signal(SIGTERM, prev_term);
        throw;
      }
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      out << "session ended: " << log.events.back().payload.at("reason").get<std::string>() << ", "
          << log.events.back().payload.at("trials_completed") << " trial(s) completed\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "ltmctl: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MixedVariants& e) {
    err << "ltmctl: " << e.what() << "\n";
    return kExitUsage;
  } catch (const session::ReplayError& e) {
    err << "ltmctl: replay diverged at seq " << e.seq() << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "ltmctl: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ltm::cli
