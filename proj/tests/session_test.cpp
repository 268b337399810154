#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "ltm/session/json_io.hpp"
#include "ltm/session/log.hpp"
#include "ltm/session/replay.hpp"
#include "ltm/session/simulate.hpp"

using namespace ltm;
using namespace ltm::session;

namespace {

sim::ParticipantModel typical_model() {
  sim::ParticipantModel m;
  m.id = "p-typical";
  m.base_hit_prob = {0.2, 0.4, 0.6, 0.8, 0.9, 1.0};
  m.lapse_prob = 0.1;
  m.body_rotation_prob = 0.1;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Every leaf of a JSON value with a setter that changes it to a different
// value of the same type.
void for_each_leaf(json& j, const std::function<void(json&)>& visit) {
  if (j.is_object() || j.is_array()) {
    for (auto& child : j) for_each_leaf(child, visit);
  } else {
    visit(j);
  }
}

void perturb(json& leaf) {
  if (leaf.is_boolean()) {
    leaf = !leaf.get<bool>();
  } else if (leaf.is_number_unsigned()) {
    leaf = leaf.get<std::uint64_t>() + 1;
  } else if (leaf.is_number_integer()) {
    leaf = leaf.get<std::int64_t>() + 1;
  } else if (leaf.is_number_float()) {
    leaf = leaf.get<double>() + 0.5;
  } else if (leaf.is_string()) {
    leaf = leaf.get<std::string>() + "x";
  } else {
    leaf = 1;
  }
}

std::size_t count_leaves(json j) {
  std::size_t n = 0;
  for_each_leaf(j, [&](json&) { ++n; });
  return n;
}

// Mutates leaf `k` (in visiting order) of `j`.
json mutated(json j, std::size_t k) {
  std::size_t i = 0;
  for_each_leaf(j, [&](json& leaf) {
    if (i++ == k) perturb(leaf);
  });
  return j;
}

}  // namespace

TEST(RunSession, AlwaysHitModelEndsEveryTrialAtLevelOne) {
  sim::ParticipantModel m;
  m.base_hit_prob = std::vector<double>(6, 1.0);
  const auto log = run_session(ProtocolConfig::defaults(Variant::LtmRi), 3, {m, 1});
  int ended = 0;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::TrialEnded) continue;
    ++ended;
    EXPECT_EQ(e.payload.at("hit_level"), 1);
  }
  EXPECT_EQ(ended, 3);
  EXPECT_EQ(log.events.back().kind, EventKind::SessionEnded);
}

TEST(RunSession, IdenticalInputsGiveByteIdenticalLogs) {
  for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
    const auto cfg = ProtocolConfig::defaults(v);
    const auto a = to_jsonl(run_session(cfg, 12, {typical_model(), 77}));
    const auto b = to_jsonl(run_session(cfg, 12, {typical_model(), 77}));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, to_jsonl(run_session(cfg, 12, {typical_model(), 78})));
  }
}

TEST(RunSession, InvalidConfigRefused) {
  auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  cfg.pf_table.pop_back();
  EXPECT_THROW(run_session(cfg, 1, {typical_model(), 1}), ContractViolation);
  EXPECT_THROW(run_session(ProtocolConfig::defaults(Variant::LtmRi), 0, {typical_model(), 1}), ContractViolation);
}

TEST(RunSession, EventStreamInvariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
      const auto cfg = ProtocolConfig::defaults(v);
      const auto log = run_session(cfg, 10, {typical_model(), seed});
      int open = 0;
      Millis prompt_t{-1};
      for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& e = log.events[i];
        ASSERT_EQ(e.seq, i);
        if (i > 0) {
          ASSERT_GE(e.t, log.events[i - 1].t);
        }
        switch (e.kind) {
          case EventKind::TrialStarted: ++open; break;
          case EventKind::TrialEnded: --open; break;
          case EventKind::PromptIssued: prompt_t = e.t; break;
          case EventKind::BehaviorObserved:
            ASSERT_GE(e.t, prompt_t);
            ASSERT_LE(e.t, prompt_t + cfg.response_window);
            break;
          default: break;
        }
        ASSERT_GE(open, 0);
        ASSERT_LE(open, 1);
      }
      EXPECT_EQ(open, 0);
      EXPECT_NO_THROW(replay(log));
    }
  }
}

TEST(RunSession, TimeoutsProduceNoObservation) {
  sim::ParticipantModel m;
  m.base_hit_prob = std::vector<double>(6, 0.0);
  m.lapse_prob = 1.0;
  m.latency_mean = Millis{20000};
  m.latency_spread = Millis{1};
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  const auto log = run_session(cfg, 1, {m, 3});
  int prompts = 0;
  for (const auto& e : log.events) {
    EXPECT_NE(e.kind, EventKind::BehaviorObserved);
    if (e.kind == EventKind::PromptIssued) ++prompts;
    if (e.kind == EventKind::ResponseClassified) {
      EXPECT_EQ(e.payload.at("classification"), "Timeout");
      EXPECT_TRUE(e.payload.at("latency_ms").is_null());
    }
  }
  EXPECT_EQ(prompts, 6);
  EXPECT_EQ(log.events.back().t, Millis{6 * 7000});
}

TEST(RunSession, RewardPauseAdvancesTimeline) {
  sim::ParticipantModel m;
  m.base_hit_prob = std::vector<double>(6, 1.0);
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  const auto log = run_session(cfg, 1, {m, 5});
  Millis reward{-1};
  for (const auto& e : log.events) {
    if (e.kind == EventKind::RewardDelivered) reward = e.t;
    if (e.kind == EventKind::TrialEnded) {
      EXPECT_EQ(e.t, reward + cfg.reward_duration);
    }
  }
}

TEST(RunSession, TargetSideIsDrawnPerTrial) {
  const auto log = run_session(ProtocolConfig::defaults(Variant::LtmRi), 200, {typical_model(), 9});
  int left = 0;
  int total = 0;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::TrialStarted) continue;
    ++total;
    if (e.payload.at("target_side") == "left") ++left;
  }
  EXPECT_EQ(total, 200);
  EXPECT_GT(left, 60);
  EXPECT_LT(left, 140);
}

TEST(InterRobotScript, TwoGreetingsThenEngagement) {
  const auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  const auto m = typical_model();
  const auto events = run_inter_robot_script(cfg, &m, 11);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].payload.at("act"), "greet");
  EXPECT_EQ(events[1].payload.at("act"), "respond");
  EXPECT_EQ(events[2].payload.at("act"), "engage");
  EXPECT_EQ(events[0].payload.at("utterance"), "hello");
  EXPECT_EQ(events[2].payload.at("to"), "participant");
}

TEST(InterRobotScript, RobotChoiceIsSeedDeterministic) {
  const auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  const auto m = typical_model();
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = run_inter_robot_script(cfg, &m, seed);
    const auto b = run_inter_robot_script(cfg, &m, seed);
    EXPECT_EQ(a, b);
    seen.insert(a[2].payload.at("robot").get<int>());
  }
  EXPECT_EQ(seen, (std::set<int>{1, 2}));
}

TEST(InterRobotScript, ListeningGazeFeedsLookingFraction) {
  auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  auto m = typical_model();
  m.base_hit_prob.resize(3);
  m.gaze.weights = {1.0, 1.0, 0.0, 0.0, 0.0};
  const auto log = run_session(cfg, 2, {m, 4});
  const auto d = derive(log);
  ASSERT_FALSE(d.script_gaze.empty());
  EXPECT_DOUBLE_EQ(stats::looking_fraction(d.script_gaze, stats::GazeRegion::Robot), 1.0);
  const double r1 = stats::looking_fraction(d.script_gaze, GazeTarget::Robot1);
  EXPECT_NEAR(r1 + stats::looking_fraction(d.script_gaze, GazeTarget::Robot2), 1.0, 1e-12);
}

TEST(InterRobotScript, RequiresTwoRobots) {
  const auto m = typical_model();
  EXPECT_THROW(run_inter_robot_script(ProtocolConfig::defaults(Variant::LtmRi), &m, 1), ContractViolation);
}

TEST(Imitation, ConstantRobotGazeActivatesAtThreshold) {
  auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  auto m = typical_model();
  m.gaze.weights = {0.0, 1.0, 0.0, 0.0, 0.0};
  const auto r = simulate_imitation_gate(cfg, m, 3);
  ASSERT_EQ(r.robot, 2);
  EXPECT_EQ(r.waited, cfg.eye_contact_threshold);
}

TEST(Imitation, NoRobotGazeTimesOut) {
  auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  auto m = typical_model();
  m.gaze.weights = {0.0, 0.0, 0.5, 0.0, 0.5};
  const auto r = simulate_imitation_gate(cfg, m, 3);
  EXPECT_FALSE(r.robot.has_value());
  EXPECT_EQ(r.waited, cfg.imitation_timeout);
}

TEST(Jsonl, RoundTripIsByteStable) {
  for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
    const auto text = to_jsonl(run_session(ProtocolConfig::defaults(v), 8, {typical_model(), 21}));
    EXPECT_EQ(to_jsonl(parse_jsonl(text)), text);
  }
}

TEST(Jsonl, MalformedLinesRejected) {
  const auto text = to_jsonl(run_session(ProtocolConfig::defaults(Variant::LtmRi), 1, {typical_model(), 1}));
  EXPECT_THROW(parse_jsonl(""), FormatError);
  EXPECT_THROW(parse_jsonl(text + "{not json\n"), FormatError);
  auto j = json::parse(text.substr(0, text.find('\n')));
  j["schema"] = 2;
  EXPECT_THROW(parse_jsonl(j.dump() + "\n"), FormatError);
}

TEST(Replay, RegeneratesSimulatedSession) {
  const auto log = run_session(ProtocolConfig::defaults(Variant::ImprovedLtmMri), 10, {typical_model(), 5});
  EXPECT_EQ(to_jsonl(replay(log)), to_jsonl(log));
}

// Every single-field change anywhere in the log is caught. Event changes are
// reported at the changed event; header changes surface through the parse,
// the regenerated stream or the header digest.
TEST(Replay, DetectsEverySingleFieldMutation) {
  for (auto v : {Variant::ImprovedLtmMri, Variant::MrisLtm}) {
    const auto log = run_session(ProtocolConfig::defaults(v), 3, {typical_model(), 8});
    const auto text = to_jsonl(log);
    std::vector<json> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));

    std::size_t checked = 0;
    for (std::size_t li = 0; li < lines.size(); ++li) {
      const std::size_t leaves = count_leaves(lines[li]);
      for (std::size_t k = 0; k < leaves; ++k) {
        auto copy = lines;
        copy[li] = mutated(lines[li], k);
        std::string changed;
        for (const auto& l : copy) changed += l.dump() + "\n";
        bool detected = false;
        try {
          replay(parse_jsonl(changed));
        } catch (const ReplayError& e) {
          detected = true;
          if (li > 0) {
            EXPECT_EQ(e.seq(), li - 1) << "line " << li << " leaf " << k;
          }
        } catch (const FormatError&) {
          detected = true;
        } catch (const ContractViolation&) {
          detected = true;
        }
        EXPECT_TRUE(detected) << "undetected mutation: line " << li << " leaf " << k << "\n" << copy[li].dump();
        ++checked;
      }
    }
    EXPECT_GT(checked, 100u);
  }
}

TEST(Replay, TruncatedLogRejected) {
  auto log = run_session(ProtocolConfig::defaults(Variant::LtmRi), 3, {typical_model(), 8});
  log.events.pop_back();
  EXPECT_THROW(replay(log), ReplayError);
}

TEST(Derive, OutcomesMatchDirectSimulation) {
  // The recorded outcomes are those run_trial would give with the same draws.
  const auto cfg = ProtocolConfig::defaults(Variant::ImprovedLtmMri);
  const auto m = typical_model();
  const auto log = run_session(cfg, 25, {m, 31});
  const auto d = derive(log);
  ASSERT_EQ(d.trials.size(), 25u);
  for (int trial = 1; trial <= 25; ++trial) {
    sim::Rng rng = sim::Rng::stream(31, static_cast<std::uint64_t>(trial));
    const auto direct = run_trial(cfg, [&](const PromptSpec& p) {
      const auto s = sim::sample_response(m, p, GazeTarget::TargetMonitor, cfg.response_window, rng);
      const auto r = classify_behavior(s, GazeTarget::TargetMonitor, cfg.response_window);
      // the runner also draws the idle gaze trace from this stream
      const Millis idle = r.classification == Classification::Timeout ? cfg.response_window : s.latency;
      session::detail::idle_gaze(m, idle, rng);
      return r;
    });
    EXPECT_EQ(d.trials[static_cast<std::size_t>(trial - 1)], recorded_outcome(trial, direct));
  }
}

// Frozen logs: regenerating them must give the same bytes on any platform.
TEST(Golden, SimulatedLogsAreStable) {
  for (const char* name : {"golden_simulated.jsonl", "golden_mris.jsonl"}) {
    const std::filesystem::path fixture = std::filesystem::path(LTM_FIXTURE_DIR) / name;
    const auto expected = slurp(fixture);
    ASSERT_FALSE(expected.empty()) << fixture;
    const auto log = parse_jsonl(expected);
    EXPECT_EQ(to_jsonl(replay(log)), expected) << name;
  }
}

// ---- config and model documents -------------------------------------------

TEST(ConfigJson, RoundTrip) {
  for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
    const auto cfg = ProtocolConfig::defaults(v);
    EXPECT_EQ(config_to_json(config_from_json(config_to_json(cfg))), config_to_json(cfg));
  }
}

TEST(ConfigJson, PartialDocumentFallsBackToDefaults) {
  const auto cfg = config_from_json(json{{"variant", "improved"}, {"max_attempts", 3}, {"n_max", 4}});
  EXPECT_EQ(cfg.variant, Variant::ImprovedLtmMri);
  EXPECT_EQ(cfg.max_attempts, 3);
  EXPECT_EQ(cfg.n_max, 4);
  EXPECT_EQ(cfg.pf_table.size(), 4u);
  EXPECT_EQ(cfg.response_window, Millis{7000});
}

TEST(ConfigJson, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(json{{"n_maxx", 3}}), FormatError);
  EXPECT_THROW(config_from_json(json{{"max_attempts", 0}}), FormatError);
  EXPECT_THROW(config_from_json(json{{"schema", 9}}), FormatError);
  EXPECT_THROW(config_from_json(json{{"variant", "lmt"}}), FormatError);
  EXPECT_THROW(config_from_json(json{{"pf_table", {{1, 1}, {1, 1}}}, {"n_max", 3}}), FormatError);
}

TEST(ModelJson, RoundTripAndValidation) {
  const auto m = typical_model();
  EXPECT_EQ(model_to_json(model_from_json(model_to_json(m))), model_to_json(m));
  EXPECT_THROW(model_from_json(json{{"base_hit_prob", {0.9, 0.1}}}), FormatError);
  EXPECT_THROW(model_from_json(json{{"gaze", {{"weights", {{"Robot3", 1.0}}}}}}), FormatError);
}
