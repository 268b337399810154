#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ltm/protocol.hpp"
#include "oracles.hpp"

using namespace ltm;

namespace {

Response respond(Classification c, long latency_ms = 1000, GazeTarget g = GazeTarget::TargetMonitor) {
  return {c, Millis{latency_ms}, g};
}

Responder scripted(std::vector<Classification> script) {
  auto idx = std::make_shared<std::size_t>(0);
  return [script = std::move(script), idx](const PromptSpec&) {
    const auto c = *idx < script.size() ? script[*idx] : Classification::Miss;
    ++*idx;
    return respond(c);
  };
}

ProtocolConfig improved(int n_max, int max_attempts) {
  auto cfg = ProtocolConfig::defaults(Variant::ImprovedLtmMri);
  cfg.resize_levels(n_max);
  cfg.max_attempts = max_attempts;
  return cfg;
}

}  // namespace

// ---- stronger --------------------------------------------------------------

TEST(Stronger, HigherRankIsStronger) {
  EXPECT_TRUE(stronger({StimulusKind::RobotAction, 2}, {StimulusKind::RobotAction, 1}));
  EXPECT_FALSE(stronger({StimulusKind::RobotAction, 1}, {StimulusKind::RobotAction, 2}));
}

TEST(Stronger, Irreflexive) {
  EXPECT_FALSE(stronger({StimulusKind::EnvFactor, 3}, {StimulusKind::EnvFactor, 3}));
}

TEST(Stronger, KindMismatchIsContractViolation) {
  EXPECT_THROW(stronger({StimulusKind::EnvFactor, 1}, {StimulusKind::RobotAction, 1}), ContractViolation);
}

TEST(Stronger, StrictTotalOrderOverRanksOneToSix) {
  for (auto kind : {StimulusKind::RobotAction, StimulusKind::EnvFactor}) {
    for (int a = 1; a <= 6; ++a) {
      const StimulusRank x{kind, a};
      EXPECT_FALSE(stronger(x, x));
      for (int b = 1; b <= 6; ++b) {
        const StimulusRank y{kind, b};
        if (a != b) {
          EXPECT_NE(stronger(x, y), stronger(y, x)) << a << " vs " << b;
        }
        for (int c = 1; c <= 6; ++c) {
          const StimulusRank z{kind, c};
          if (stronger(x, y) && stronger(y, z)) {
            EXPECT_TRUE(stronger(x, z));
          }
        }
      }
    }
  }
}

TEST(Stronger, DefaultCatalogPromptsAreMonotoneInLevel) {
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  for (int level = 2; level <= cfg.n_max; ++level) {
    const auto prev = make_prompt(cfg, level - 1);
    const auto cur = make_prompt(cfg, level);
    EXPECT_FALSE(stronger(prev.robot_action, cur.robot_action));
    EXPECT_FALSE(stronger(prev.env_factor, cur.env_factor));
  }
}

// ---- stimulus sets ---------------------------------------------------------

TEST(StimulusSet, Combos) {
  const auto v = stimulus_set(1);
  EXPECT_TRUE(v.contains(Modality::Visual));
  EXPECT_FALSE(v.contains(Modality::Speech));
  EXPECT_FALSE(v.contains(Modality::Motion));

  const auto vsm = stimulus_set(3);
  EXPECT_TRUE(vsm.contains(Modality::Visual));
  EXPECT_TRUE(vsm.contains(Modality::Speech));
  EXPECT_TRUE(vsm.contains(Modality::Motion));
}

TEST(StimulusSet, StrictlyIncreasingUnderInclusion) {
  for (int j = 1; j < 3; ++j) {
    EXPECT_TRUE(stimulus_set(j).subset_of(stimulus_set(j + 1)));
    EXPECT_FALSE(stimulus_set(j + 1).subset_of(stimulus_set(j)));
  }
}

TEST(StimulusSet, OutOfRange) {
  EXPECT_THROW(stimulus_set(0), ContractViolation);
  EXPECT_THROW(stimulus_set(4), ContractViolation);
}

// ---- imitation -------------------------------------------------------------

TEST(ImitationGate, SustainedContactActivatesRobot) {
  const std::vector<GazeInterval> ev{{GazeTarget::Robot1, Millis{5200}}};
  EXPECT_EQ(imitation_gate(ev, Millis{5000}), 1);
}

TEST(ImitationGate, BelowThreshold) {
  const std::vector<GazeInterval> ev{{GazeTarget::Robot1, Millis{4900}}, {GazeTarget::Robot2, Millis{100}}};
  EXPECT_EQ(imitation_gate(ev, Millis{5000}), std::nullopt);
}

TEST(ImitationGate, FirstQualifierWins) {
  const std::vector<GazeInterval> ev{{GazeTarget::Robot2, Millis{6000}}, {GazeTarget::Robot1, Millis{7000}}};
  EXPECT_EQ(imitation_gate(ev, Millis{5000}), 2);
}

TEST(ImitationGate, ContactInterruptedByLookingAwayResets) {
  const std::vector<GazeInterval> ev{{GazeTarget::Robot1, Millis{3000}},
                                     {GazeTarget::Elsewhere, Millis{100}},
                                     {GazeTarget::Robot1, Millis{3000}}};
  EXPECT_EQ(imitation_gate(ev, Millis{5000}), std::nullopt);

  const std::vector<GazeInterval> adjacent{{GazeTarget::Robot1, Millis{3000}}, {GazeTarget::Robot1, Millis{2000}}};
  EXPECT_EQ(imitation_gate(adjacent, Millis{5000}), 1);
}

TEST(ImitationSequence, PerRobotGestures) {
  EXPECT_EQ(imitation_sequence(1), (std::vector<GestureCommand>{{1, Gesture::Forward}, {1, Gesture::Backward}}));
  EXPECT_EQ(imitation_sequence(2), (std::vector<GestureCommand>{{2, Gesture::RaiseHands}, {2, Gesture::HandsDown}}));
  EXPECT_THROW(imitation_sequence(3), ContractViolation);
}

TEST(ImitationSequence, RobotsUseDisjointGestures) {
  std::set<Gesture> one;
  for (const auto& g : imitation_sequence(1)) one.insert(g.gesture);
  for (const auto& g : imitation_sequence(2)) EXPECT_EQ(one.count(g.gesture), 0u);
}

// ---- cue detection ---------------------------------------------------------

TEST(ClassifyBehavior, GazeOnTargetInsideWindowIsHit) {
  const auto r = classify_behavior({GazeTarget::TargetMonitor, Millis{2100}, 10.0}, GazeTarget::TargetMonitor,
                                   Millis{7000});
  EXPECT_EQ(r.classification, Classification::Hit);
  EXPECT_EQ(r.rating(), 1);
}

TEST(ClassifyBehavior, FullBodyTurnIsDisqualified) {
  const auto r = classify_behavior({GazeTarget::TargetMonitor, Millis{2100}, 120.0}, GazeTarget::TargetMonitor,
                                   Millis{7000});
  EXPECT_EQ(r.classification, Classification::DisqualifiedBodyRotation);
  EXPECT_EQ(r.rating(), 0);
}

TEST(ClassifyBehavior, LateResponseTimesOut) {
  const auto r = classify_behavior({GazeTarget::TargetMonitor, Millis{8000}, 5.0}, GazeTarget::TargetMonitor,
                                   Millis{7000});
  EXPECT_EQ(r.classification, Classification::Timeout);
}

TEST(ClassifyBehavior, WindowBoundaryIsInclusive) {
  const auto r = classify_behavior({GazeTarget::TargetMonitor, Millis{7000}, 5.0}, GazeTarget::TargetMonitor,
                                   Millis{7000});
  EXPECT_EQ(r.classification, Classification::Hit);
}

TEST(ClassifyBehavior, WrongTargetIsMiss) {
  const auto r = classify_behavior({GazeTarget::NonTargetMonitor, Millis{1000}, 5.0}, GazeTarget::TargetMonitor,
                                   Millis{7000});
  EXPECT_EQ(r.classification, Classification::Miss);
}

TEST(ClassifyBehavior, NegativeLatencyRejected) {
  EXPECT_THROW(classify_behavior({GazeTarget::TargetMonitor, Millis{-1}, 0.0}, GazeTarget::TargetMonitor,
                                 Millis{7000}),
               ContractViolation);
}

TEST(ClassifyBehavior, HitIffRatingOne) {
  std::mt19937 gen(7);
  std::uniform_int_distribution<int> target(0, 4);
  std::uniform_int_distribution<int> latency(0, 9000);
  std::uniform_real_distribution<double> torso(0.0, 180.0);
  for (int i = 0; i < 2000; ++i) {
    const BehaviorSample s{kAllGazeTargets[target(gen)], Millis{latency(gen)}, torso(gen)};
    const auto r = classify_behavior(s, GazeTarget::Robot2, Millis{3000});
    EXPECT_EQ(r.classification == Classification::Hit, r.rating() == 1);
  }
}

// ---- prompting function ----------------------------------------------------

TEST(NextPrompt, ImprovedRepeatsLevelWhileAttemptsRemain) {
  const auto cfg = improved(6, 2);
  const auto prev = make_prompt(cfg, 1);
  const auto next = next_prompt(prev, respond(Classification::Miss), 1, cfg);
  ASSERT_TRUE(std::holds_alternative<PromptSpec>(next));
  EXPECT_EQ(std::get<PromptSpec>(next).level, 1);
}

TEST(NextPrompt, ImprovedEscalatesAfterMaxAttempts) {
  const auto cfg = improved(6, 2);
  const auto next = next_prompt(make_prompt(cfg, 1), respond(Classification::Miss), 2, cfg);
  ASSERT_TRUE(std::holds_alternative<PromptSpec>(next));
  EXPECT_EQ(std::get<PromptSpec>(next).level, 2);
}

TEST(NextPrompt, TerminatesAtTopLevel) {
  const auto cfg = improved(6, 2);
  EXPECT_TRUE(std::holds_alternative<Terminate>(next_prompt(make_prompt(cfg, 6), respond(Classification::Miss), 2, cfg)));

  const auto ltm = ProtocolConfig::defaults(Variant::LtmRi);
  EXPECT_TRUE(std::holds_alternative<Terminate>(next_prompt(make_prompt(ltm, 6), respond(Classification::Timeout), 1, ltm)));
}

TEST(NextPrompt, LtmRiEscalatesOnEveryMissWithRepeatedContent) {
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  const auto next = std::get<PromptSpec>(next_prompt(make_prompt(cfg, 1), respond(Classification::Miss), 1, cfg));
  EXPECT_EQ(next.level, 2);
  // Level 2 repeats level 1's content.
  EXPECT_EQ(next.robot_action, make_prompt(cfg, 1).robot_action);
  EXPECT_EQ(next.env_factor, make_prompt(cfg, 1).env_factor);
}

TEST(NextPrompt, LevelAboveNmaxIsContractViolation) {
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  PromptSpec bogus = make_prompt(cfg, 6);
  bogus.level = 7;
  EXPECT_THROW(next_prompt(bogus, respond(Classification::Miss), 1, cfg), ContractViolation);
}

TEST(NextPrompt, HitIsNotAValidInput) {
  const auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  EXPECT_THROW(next_prompt(make_prompt(cfg, 1), respond(Classification::Hit), 1, cfg), ContractViolation);
}

TEST(NextPrompt, MrisPromptsCarryStimulusCombos) {
  const auto cfg = ProtocolConfig::defaults(Variant::MrisLtm);
  for (int level = 1; level <= cfg.n_max; ++level) {
    const auto p = make_prompt(cfg, level, 2);
    ASSERT_TRUE(p.stimulus_combo.has_value());
    EXPECT_EQ(*p.stimulus_combo, stimulus_set(level));
    EXPECT_EQ(p.robot_index, 2);
  }
  EXPECT_FALSE(make_prompt(ProtocolConfig::defaults(Variant::LtmRi), 1).stimulus_combo.has_value());
}

// ---- run_trial -------------------------------------------------------------

TEST(RunTrial, ImmediateHit) {
  for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
    const auto out = run_trial(ProtocolConfig::defaults(v), scripted({Classification::Hit}));
    EXPECT_EQ(out.hit_level, 1);
    EXPECT_EQ(out.prompts_issued, 1);
    EXPECT_EQ(out.escalation_score, 1);
    EXPECT_TRUE(out.rewarded);
  }
}

TEST(RunTrial, ImprovedHitOnThirdPrompt) {
  const auto out = run_trial(improved(6, 2), scripted({Classification::Miss, Classification::Miss, Classification::Hit}));
  EXPECT_EQ(out.hit_level, 2);
  EXPECT_EQ(out.prompts_issued, 3);
  EXPECT_EQ(out.escalation_score, 3);
}

TEST(RunTrial, LtmRiNeverHitAdministersAllSixLevels) {
  const auto out = run_trial(ProtocolConfig::defaults(Variant::LtmRi), scripted({}));
  EXPECT_FALSE(out.hit_level.has_value());
  EXPECT_FALSE(out.rewarded);
  EXPECT_EQ(out.prompts_issued, 6);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(out.attempts[static_cast<std::size_t>(i)].prompt.level, i + 1);
}

TEST(RunTrial, ThrowingResponderAbortsTrial) {
  int calls = 0;
  const auto out = run_trial(ProtocolConfig::defaults(Variant::LtmRi), [&](const PromptSpec&) -> Response {
    if (++calls == 2) throw std::runtime_error("sensor offline");
    return respond(Classification::Miss);
  });
  EXPECT_TRUE(out.aborted);
  EXPECT_FALSE(out.rewarded);
  EXPECT_EQ(out.prompts_issued, 1);
  EXPECT_NE(out.abort_reason.find("sensor offline"), std::string::npos);
}

TEST(RunTrial, InvalidConfigRefused) {
  auto cfg = ProtocolConfig::defaults(Variant::LtmRi);
  cfg.pf_table[3] = {1, 1};  // drops below level 3's rank
  EXPECT_THROW(run_trial(cfg, scripted({})), ContractViolation);
}

TEST(TrialMachine, OverrideOnlyUpward) {
  TrialMachine m(ProtocolConfig::defaults(Variant::LtmRi));
  m.submit(respond(Classification::Miss));
  m.submit(respond(Classification::Miss));
  EXPECT_EQ(m.current_prompt().level, 3);
  EXPECT_THROW(m.override_level(2), ContractViolation);
  EXPECT_THROW(m.override_level(3), ContractViolation);
  EXPECT_THROW(m.override_level(7), ContractViolation);
  m.override_level(5);
  EXPECT_EQ(m.current_prompt().level, 5);
  m.submit(respond(Classification::Hit));
  EXPECT_EQ(m.outcome().hit_level, 5);
}

// ---- properties ------------------------------------------------------------

TEST(RunTrialProperty, LevelsMonotoneScoreIdentityAndBounded) {
  std::mt19937_64 gen(20240611);
  std::uniform_int_distribution<int> nmax(1, 6);
  std::uniform_int_distribution<int> attempts(1, 4);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int t = 0; t < 3000; ++t) {
    const Variant v = std::array{Variant::LtmRi, Variant::ImprovedLtmMri}[t % 2];
    auto cfg = ProtocolConfig::defaults(v);
    cfg.resize_levels(nmax(gen));
    cfg.max_attempts = attempts(gen);
    const auto out = run_trial(cfg, [&](const PromptSpec&) {
      // Bias toward non-hits so long trials get exercised.
      const int c = cls(gen);
      return respond(c == 0 && gen() % 3 == 0 ? Classification::Hit
                                              : static_cast<Classification>(std::max(1, c)));
    });
    for (std::size_t i = 1; i < out.attempts.size(); ++i) {
      EXPECT_LE(out.attempts[i - 1].prompt.level, out.attempts[i].prompt.level);
    }
    EXPECT_EQ(out.prompts_issued, static_cast<int>(out.attempts.size()));
    EXPECT_EQ(out.hit_level.has_value(), out.rewarded);
    EXPECT_EQ(out.escalation_score, out.prompts_issued);
    EXPECT_LE(out.prompts_issued, cfg.n_max * cfg.attempts_per_level());
  }
}

TEST(RunTrialProperty, MatchesScriptOracleExhaustively) {
  for (auto v : {Variant::LtmRi, Variant::MrisLtm, Variant::ImprovedLtmMri}) {
    for (int n_max = 1; n_max <= 3; ++n_max) {
      for (int ma = 1; ma <= 2; ++ma) {
        auto cfg = ProtocolConfig::defaults(v);
        cfg.resize_levels(n_max);
        cfg.max_attempts = ma;
        const int per_level = cfg.attempts_per_level();
        const int len = n_max * per_level;
        for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
          std::vector<bool> hits;
          std::vector<Classification> script;
          for (int k = 0; k < len; ++k) {
            hits.push_back((mask >> k) & 1u);
            script.push_back(hits.back() ? Classification::Hit : Classification::Miss);
          }
          const auto expected = oracle::trial(n_max, per_level, hits);
          const auto got = run_trial(cfg, scripted(script));
          EXPECT_EQ(got.hit_level, expected.hit_level);
          EXPECT_EQ(got.prompts_issued, expected.prompts_issued);
          EXPECT_EQ(got.escalation_score, expected.escalation_score);
          ASSERT_EQ(got.attempts.size(), expected.levels.size());
          for (std::size_t i = 0; i < expected.levels.size(); ++i) {
            EXPECT_EQ(got.attempts[i].prompt.level, expected.levels[i]);
          }
        }
      }
    }
  }
}
