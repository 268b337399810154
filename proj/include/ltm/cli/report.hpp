#pragma once

// Report documents over a set of session logs.
//
// JSON: {schema, sd_convention, inputs: [...], records: [...]}, each record
// {metric, value, method, n, config_hash, scope}. CSV: one row per session.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltm/session/replay.hpp"
#include "ltm/stats.hpp"

namespace ltm::cli {

inline constexpr int kReportSchema = 1;

class MixedVariants : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedLog {
  std::string name;
  session::SessionLog log;
};

struct SessionSummary {
  std::string file;
  std::string participant;
  Variant variant = Variant::LtmRi;
  int session = 0;
  session::Mode mode = session::Mode::Simulated;
  std::uint64_t seed = 0;
  std::string config_hash;
  int n_max = 0;
  std::vector<TrialOutcome> scored;
  std::size_t aborted = 0;
  std::vector<stats::GazeSegment> gaze;  // every recorded segment, all phases

  std::optional<stats::MeanSd> hit_level() const {
    if (std::none_of(scored.begin(), scored.end(), [](const TrialOutcome& o) { return o.hit_level.has_value(); })) {
      return std::nullopt;
    }
    return stats::avg_hit_prompt_level(scored);
  }
};

namespace detail {

inline std::string participant_of(const session::SessionHeader& h) {
  if (h.mode == session::Mode::Simulated) return h.participant.at("model").at("id").get<std::string>();
  return h.participant.value("operator", std::string("operator"));
}

inline json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// One hash for a record spanning several configs.
inline std::string combined_hash(const std::set<std::string>& hashes) {
  if (hashes.size() == 1) return *hashes.begin();
  std::string joined;
  for (const auto& h : hashes) joined += h + ";";
  return hex64(fnv1a64(joined));
}

inline std::string num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace detail

// Verifies every log by replay (unless the caller just produced them), then
// reduces it to the numbers reports need.
// Logs without a plan session index are numbered in input order per
// (variant, participant).
inline std::vector<SessionSummary> summarize(const std::vector<NamedLog>& logs, bool allow_mixed,
                                             bool verify = true) {
  std::vector<SessionSummary> out;
  std::map<std::pair<Variant, std::string>, int> next_index;
  std::set<std::tuple<Variant, std::string, int>> seen;
  for (const auto& [name, log] : logs) {
    const auto d = verify ? session::derive(session::replay(log)) : session::derive(log);
    SessionSummary s;
    s.file = name;
    s.participant = detail::participant_of(log.header);
    s.variant = log.header.config.variant;
    s.mode = log.header.mode;
    s.seed = log.header.seed;
    s.config_hash = config_hash(log.header.config);
    s.n_max = log.header.config.n_max;
    s.scored = d.scored_outcomes();
    s.aborted = d.trials.size() - s.scored.size();
    for (const auto* part : {&d.script_gaze, &d.imitation_gaze, &d.window_gaze}) {
      s.gaze.insert(s.gaze.end(), part->begin(), part->end());
    }
    auto& counter = next_index[{s.variant, s.participant}];
    s.session = log.header.participant.value("session", 0);
    if (s.session == 0) s.session = ++counter;
    if (!seen.insert({s.variant, s.participant, s.session}).second) {
      throw std::runtime_error(name + ": participant '" + s.participant + "' session " + std::to_string(s.session) +
                               " (" + std::string(to_string(s.variant)) + ") appears twice");
    }
    out.push_back(std::move(s));
  }
  std::set<Variant> variants;
  for (const auto& s : out) variants.insert(s.variant);
  if (variants.size() > 1 && !allow_mixed) {
    throw MixedVariants("logs mix protocol variants; pass --allow-mixed to report them together");
  }
  std::sort(out.begin(), out.end(), [](const SessionSummary& a, const SessionSummary& b) {
    return std::tie(a.variant, a.participant, a.session) < std::tie(b.variant, b.participant, b.session);
  });
  return out;
}

inline json build_report(const std::vector<SessionSummary>& sessions) {
  json inputs = json::array();
  json records = json::array();
  auto record = [&](std::string metric, json value, std::string method, std::size_t n, std::string hash,
                    json scope) {
    records.push_back({{"metric", std::move(metric)},
                       {"value", std::move(value)},
                       {"method", std::move(method)},
                       {"n", n},
                       {"config_hash", std::move(hash)},
                       {"scope", std::move(scope)}});
  };

  for (const auto& s : sessions) {
    inputs.push_back({{"file", s.file},
                      {"participant", s.participant},
                      {"variant", std::string(to_string(s.variant))},
                      {"session", s.session},
                      {"mode", std::string(to_string(s.mode))},
                      {"seed", s.seed},
                      {"config_hash", s.config_hash},
                      {"trials_scored", s.scored.size()},
                      {"trials_aborted", s.aborted}});
    const json scope = {{"participant", s.participant}, {"variant", std::string(to_string(s.variant))},
                        {"session", s.session}};
    const auto hl = s.hit_level();
    const auto hits = static_cast<std::size_t>(
        std::count_if(s.scored.begin(), s.scored.end(), [](const TrialOutcome& o) { return o.hit_level.has_value(); }));
    record("avg_hit_prompt_level", detail::opt(hl ? std::optional(hl->mean) : std::nullopt), "mean_over_hit_trials",
           hits, s.config_hash, scope);
    record("sd_hit_prompt_level", detail::opt(hl ? std::optional(hl->sd) : std::nullopt), "population_sd", hits,
           s.config_hash, scope);
    if (!s.scored.empty()) {
      const auto ir = stats::intensity_report(s.scored, s.n_max);
      for (int l = 1; l <= s.n_max; ++l) {
        json ls = scope;
        ls["level"] = l;
        record("level_intensity", ir.per_level[static_cast<std::size_t>(l - 1)], "trial_fraction", ir.total_trials,
               s.config_hash, ls);
        record("cumulative_intensity", ir.cumulative[static_cast<std::size_t>(l - 1)], "cumulative_trial_fraction",
               ir.total_trials, s.config_hash, ls);
      }
      record("miss_fraction", ir.miss_fraction, "trial_fraction", ir.total_trials, s.config_hash, scope);
    }
    if (!s.gaze.empty()) {
      for (auto r : stats::kAllGazeRegions) {
        json rs = scope;
        rs["region"] = std::string(stats::to_string(r));
        record("looking_fraction", stats::looking_fraction(std::span<const stats::GazeSegment>(s.gaze), r),
               "time_weighted", s.gaze.size(), s.config_hash, rs);
      }
    }
  }

  // Cohort level, per variant.
  std::map<Variant, std::vector<const SessionSummary*>> by_variant;
  for (const auto& s : sessions) by_variant[s.variant].push_back(&s);
  std::map<Variant, std::vector<double>> session_means;
  for (const auto& [v, group] : by_variant) {
    const std::string vname(to_string(v));
    std::set<std::string> hashes;
    std::map<int, std::vector<const SessionSummary*>> by_session;
    int n_max = 0;
    for (const auto* s : group) {
      hashes.insert(s->config_hash);
      by_session[s->session].push_back(s);
      n_max = std::max(n_max, s->n_max);
    }
    const auto hash = detail::combined_hash(hashes);
    for (const auto& [k, members] : by_session) {
      const json scope = {{"participant", "*"}, {"variant", vname}, {"session", k}};
      std::vector<double> means;
      std::vector<TrialOutcome> pooled;
      for (const auto* s : members) {
        if (auto hl = s->hit_level()) means.push_back(hl->mean);
        pooled.insert(pooled.end(), s->scored.begin(), s->scored.end());
      }
      std::optional<double> mean_of_means;
      if (!means.empty()) {
        double sum = 0.0;
        for (double m : means) sum += m;
        mean_of_means = sum / static_cast<double>(means.size());
      }
      record("avg_hit_prompt_level", detail::opt(mean_of_means), "mean_of_participant_means", means.size(), hash,
             scope);
      if (!pooled.empty()) {
        const auto ir = stats::intensity_report(pooled, n_max);
        for (int l = 1; l <= n_max; ++l) {
          json ls = scope;
          ls["level"] = l;
          record("cumulative_intensity", ir.cumulative[static_cast<std::size_t>(l - 1)],
                 "pooled_cumulative_trial_fraction", ir.total_trials, hash, ls);
        }
      }
    }

    // First vs last session, paired by participant.
    if (by_session.size() >= 2) {
      const int first = by_session.begin()->first;
      const int last = by_session.rbegin()->first;
      std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> paired;
      for (const auto* s : by_session[first]) {
        if (auto hl = s->hit_level()) paired[s->participant].first = hl->mean;
      }
      for (const auto* s : by_session[last]) {
        if (auto hl = s->hit_level()) paired[s->participant].second = hl->mean;
      }
      std::vector<std::pair<double, double>> pairs;
      for (const auto& [_, p] : paired) {
        if (p.first && p.second) pairs.emplace_back(*p.first, *p.second);
      }
      const json scope = {{"participant", "*"}, {"variant", vname}, {"sessions", {first, last}}};
      if (!pairs.empty()) {
        const auto t = stats::wilcoxon_signed_rank(pairs);
        const std::string method(stats::to_string(t.method));
        record("signed_rank_first_vs_last_p", t.p_value, method, pairs.size(), hash, scope);
        record("signed_rank_first_vs_last_w_plus", t.statistic, method, pairs.size(), hash, scope);
      }
    }
    for (const auto* s : group) {
      if (auto hl = s->hit_level()) session_means[v].push_back(hl->mean);
    }
  }

  // Between variants: per-session mean hit levels.
  for (auto a = session_means.begin(); a != session_means.end(); ++a) {
    for (auto b = std::next(a); b != session_means.end(); ++b) {
      std::set<std::string> hashes;
      for (const auto* s : by_variant[a->first]) hashes.insert(s->config_hash);
      for (const auto* s : by_variant[b->first]) hashes.insert(s->config_hash);
      const auto t = stats::wilcoxon_rank_sum(a->second, b->second);
      const json scope = {{"participant", "*"},
                          {"variants", {std::string(to_string(a->first)), std::string(to_string(b->first))}}};
      const std::string method(stats::to_string(t.method));
      const auto n = a->second.size() + b->second.size();
      record("rank_sum_session_means_p", t.p_value, method, n, detail::combined_hash(hashes), scope);
      record("rank_sum_session_means_w", t.statistic, method, n, detail::combined_hash(hashes), scope);
    }
  }

  return {{"schema", kReportSchema}, {"sd_convention", "population"}, {"inputs", inputs}, {"records", records}};
}

inline std::string report_csv(const std::vector<SessionSummary>& sessions) {
  int levels = 0;
  for (const auto& s : sessions) levels = std::max(levels, s.n_max);
  std::string out = "participant,variant,session,mode,seed,config_hash,trials_scored,trials_aborted,"
                    "avg_hit_level,sd_hit_level,miss_fraction";
  for (int l = 1; l <= levels; ++l) out += ",level_" + std::to_string(l);
  for (int l = 1; l <= levels; ++l) out += ",cumulative_" + std::to_string(l);
  for (auto r : stats::kAllGazeRegions) out += ",look_" + std::string(stats::to_string(r));
  out += '\n';
  for (const auto& s : sessions) {
    const auto hl = s.hit_level();
    out += s.participant + "," + std::string(to_string(s.variant)) + "," + std::to_string(s.session) + "," +
           std::string(to_string(s.mode)) + "," + std::to_string(s.seed) + "," + s.config_hash + "," +
           std::to_string(s.scored.size()) + "," + std::to_string(s.aborted) + "," +
           detail::num(hl ? std::optional(hl->mean) : std::nullopt) + "," +
           detail::num(hl ? std::optional(hl->sd) : std::nullopt);
    std::optional<stats::IntensityReport> ir;
    if (!s.scored.empty()) ir = stats::intensity_report(s.scored, s.n_max);
    out += "," + detail::num(ir ? std::optional(ir->miss_fraction) : std::nullopt);
    for (int pass = 0; pass < 2; ++pass) {
      for (int l = 1; l <= levels; ++l) {
        std::optional<double> v;
        if (ir && l <= s.n_max) {
          const auto i = static_cast<std::size_t>(l - 1);
          v = pass == 0 ? ir->per_level[i] : ir->cumulative[i];
        }
        out += "," + detail::num(v);
      }
    }
    for (auto r : stats::kAllGazeRegions) {
      std::optional<double> v;
      if (!s.gaze.empty()) v = stats::looking_fraction(std::span<const stats::GazeSegment>(s.gaze), r);
      out += "," + detail::num(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace ltm::cli
