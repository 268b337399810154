#pragma once

// Batch experiment plans: a cohort of participant models, each run for a
// number of sessions under one or more variants.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltm/error.hpp"
#include "ltm/session/json_io.hpp"
#include "ltm/sim/participant.hpp"
#include "ltm/sim/rng.hpp"

namespace ltm::cli {

inline constexpr int kPlanSchema = 1;

struct ExperimentPlan {
  std::vector<sim::ParticipantModel> cohort;
  int sessions_per_participant = 1;
  int trials_per_session = 10;
  std::vector<ProtocolConfig> configs;  // one per variant
  std::uint64_t seed_base = 0;
  std::filesystem::path output_dir = ".";
};

// FNV-1a over "seed_base/participant/session/variant", then a SplitMix64
// finalizer. Indices are 1-based.
inline std::uint64_t derive_seed(std::uint64_t seed_base, int participant, int session, Variant v) {
  const std::string key = std::to_string(seed_base) + "/" + std::to_string(participant) + "/" +
                          std::to_string(session) + "/" + std::string(to_string(v));
  return sim::splitmix64(fnv1a64(key));
}

struct PlannedSession {
  int participant = 0;  // 1-based
  int session = 0;      // 1-based
  std::size_t config = 0;
  std::uint64_t seed = 0;
  sim::ParticipantModel model;  // after learning from the earlier sessions
  std::string file;
};

inline std::string log_file_name(int participant, Variant v, int session) {
  return "p" + std::to_string(participant) + "_" + std::string(to_string(v)) + "_s" + std::to_string(session) +
         ".jsonl";
}

inline void validate(const ExperimentPlan& plan) {
  require(!plan.cohort.empty(), "plan: cohort is empty");
  require(plan.sessions_per_participant >= 1, "plan: sessions must be >= 1");
  require(plan.trials_per_session >= 1, "plan: trials must be >= 1");
  require(!plan.configs.empty(), "plan: no variant selected");
  std::set<Variant> seen;
  for (const auto& c : plan.configs) {
    c.validate();
    require(seen.insert(c.variant).second, "plan: variant listed twice");
  }
  for (const auto& m : plan.cohort) {
    m.validate();
    for (const auto& c : plan.configs) {
      require(m.base_hit_prob.size() >= static_cast<std::size_t>(c.n_max),
              "plan: participant '" + m.id + "' has fewer hit probabilities than " + std::string(to_string(c.variant)) +
                  " has levels");
    }
  }
}

// Every session of the plan, in a fixed order (variant, participant, session).
inline std::vector<PlannedSession> expand(const ExperimentPlan& plan) {
  validate(plan);
  std::vector<PlannedSession> out;
  std::set<std::uint64_t> seeds;
  for (std::size_t c = 0; c < plan.configs.size(); ++c) {
    const Variant v = plan.configs[c].variant;
    for (std::size_t p = 0; p < plan.cohort.size(); ++p) {
      auto model = plan.cohort[p];
      for (int s = 1; s <= plan.sessions_per_participant; ++s) {
        if (s > 1) model = sim::apply_session_learning(model);
        const int pi = static_cast<int>(p) + 1;
        PlannedSession ps{pi, s, c, derive_seed(plan.seed_base, pi, s, v), model, log_file_name(pi, v, s)};
        if (!seeds.insert(ps.seed).second) {
          throw ContractViolation("plan: derived seed collision at " + ps.file + "; pick another seed base");
        }
        out.push_back(std::move(ps));
      }
    }
  }
  return out;
}

// Cohort for runs without a plan file: `n` copies of `base`, ids p1..pn.
inline std::vector<sim::ParticipantModel> uniform_cohort(const sim::ParticipantModel& base, int n) {
  require(n >= 1, "cohort size must be >= 1");
  std::vector<sim::ParticipantModel> out;
  for (int i = 1; i <= n; ++i) {
    auto m = base;
    m.id = "p" + std::to_string(i);
    out.push_back(std::move(m));
  }
  return out;
}

// Plan document: {schema, cohort: [model...], sessions?, trials?, seed_base?}.
// Variants and protocol settings come from the command line and --config.
struct PlanFile {
  std::vector<sim::ParticipantModel> cohort;
  std::optional<int> sessions;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed_base;
};

inline PlanFile plan_from_json(const json& j) {
  ltm::detail::reject_unknown_keys(j, {"schema", "cohort", "sessions", "trials", "seed_base"}, "plan");
  ltm::detail::check_schema(j, kPlanSchema, "plan");
  PlanFile f;
  try {
    for (const auto& m : j.at("cohort")) f.cohort.push_back(model_from_json(m));
    if (j.contains("sessions")) f.sessions = j.at("sessions").get<int>();
    if (j.contains("trials")) f.trials = j.at("trials").get<int>();
    if (j.contains("seed_base")) f.seed_base = j.at("seed_base").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("plan: ") + e.what());
  }
  if (f.cohort.empty()) throw FormatError("plan: cohort is empty");
  std::set<std::string> ids;
  for (const auto& m : f.cohort) {
    if (!ids.insert(m.id).second) throw FormatError("plan: participant id '" + m.id + "' used twice");
  }
  return f;
}

}  // namespace ltm::cli
