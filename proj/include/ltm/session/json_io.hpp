#pragma once

// JSON documents for protocol configs and participant models.
//
// Both are flat key-value objects with a "schema" version. Missing keys fall
// back to the variant defaults; unknown keys are rejected so typos surface.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"
#include "ltm/sim/participant.hpp"

namespace ltm {

using json = nlohmann::json;

inline constexpr int kConfigSchema = 1;
inline constexpr int kModelSchema = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw FormatError(std::string(what) + ": unknown key '" + key + "'");
  }
}

inline void check_schema(const json& j, int expected, const char* what) {
  if (j.contains("schema") && j.at("schema").get<int>() != expected) {
    throw FormatError(std::string(what) + ": unsupported schema " + j.at("schema").dump());
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_ms(const json& j, const char* key, Millis& out) {
  if (j.contains(key)) out = Millis{j.at(key).get<std::int64_t>()};
}

}  // namespace detail

// ---- ProtocolConfig -------------------------------------------------------

inline json config_to_json(const ProtocolConfig& c) {
  json pf = json::array();
  for (const auto& row : c.pf_table) pf.push_back({row.ra_rank, row.ef_rank});
  return {
      {"schema", kConfigSchema},
      {"variant", std::string(to_string(c.variant))},
      {"n_max", c.n_max},
      {"max_attempts", c.max_attempts},
      {"response_window_ms", c.response_window.count()},
      {"reward_duration_ms", c.reward_duration.count()},
      {"eye_contact_threshold_ms", c.eye_contact_threshold.count()},
      {"torso_threshold_deg", c.torso_threshold_degrees},
      {"inter_robot_script", c.inter_robot_script},
      {"imitation_phase", c.imitation_phase},
      {"imitation_timeout_ms", c.imitation_timeout.count()},
      {"ra_catalog", c.ra_catalog},
      {"ef_catalog", c.ef_catalog},
      {"pf_table", pf},
  };
}

// `fallback_variant` applies when the document does not name one.
inline ProtocolConfig config_from_json(const json& j, Variant fallback_variant = Variant::LtmRi) {
  detail::reject_unknown_keys(j,
                              {"schema", "variant", "n_max", "max_attempts", "response_window_ms",
                               "reward_duration_ms", "eye_contact_threshold_ms", "torso_threshold_deg",
                               "inter_robot_script", "imitation_phase", "imitation_timeout_ms", "ra_catalog",
                               "ef_catalog", "pf_table"},
                              "config");
  detail::check_schema(j, kConfigSchema, "config");
  try {
    const Variant v = j.contains("variant") ? parse_variant(j.at("variant").get<std::string>()) : fallback_variant;
    ProtocolConfig c = ProtocolConfig::defaults(v);
    detail::read_opt(j, "max_attempts", c.max_attempts);
    detail::read_ms(j, "response_window_ms", c.response_window);
    detail::read_ms(j, "reward_duration_ms", c.reward_duration);
    detail::read_ms(j, "eye_contact_threshold_ms", c.eye_contact_threshold);
    detail::read_opt(j, "torso_threshold_deg", c.torso_threshold_degrees);
    detail::read_opt(j, "inter_robot_script", c.inter_robot_script);
    detail::read_opt(j, "imitation_phase", c.imitation_phase);
    detail::read_ms(j, "imitation_timeout_ms", c.imitation_timeout);
    detail::read_opt(j, "ra_catalog", c.ra_catalog);
    detail::read_opt(j, "ef_catalog", c.ef_catalog);
    if (j.contains("pf_table")) {
      c.pf_table.clear();
      for (const auto& row : j.at("pf_table")) {
        c.pf_table.push_back({row.at(0).get<int>(), row.at(1).get<int>()});
      }
      c.n_max = static_cast<int>(c.pf_table.size());
    }
    if (j.contains("n_max")) {
      const int n = j.at("n_max").get<int>();
      if (j.contains("pf_table")) {
        if (n != c.n_max) throw FormatError("config: n_max disagrees with pf_table length");
      } else {
        c.resize_levels(n);
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
}

// ---- ParticipantModel -----------------------------------------------------

inline json model_to_json(const sim::ParticipantModel& m) {
  json weights = json::object();
  for (auto g : kAllGazeTargets) weights[std::string(to_string(g))] = m.gaze.weight(g);
  return {
      {"schema", kModelSchema},
      {"id", m.id},
      {"base_hit_prob", m.base_hit_prob},
      {"lapse_prob", m.lapse_prob},
      {"learning_rate", m.learning_rate},
      {"latency_mean_ms", m.latency_mean.count()},
      {"latency_spread_ms", m.latency_spread.count()},
      {"body_rotation_prob", m.body_rotation_prob},
      {"gaze", {{"weights", weights}, {"mean_dwell_ms", m.gaze.mean_dwell.count()}}},
      {"severity_tag", m.severity_tag},
      {"rng_seed", m.rng_seed},
  };
}

inline sim::ParticipantModel model_from_json(const json& j) {
  detail::reject_unknown_keys(j,
                              {"schema", "id", "base_hit_prob", "lapse_prob", "learning_rate", "latency_mean_ms",
                               "latency_spread_ms", "body_rotation_prob", "gaze", "severity_tag", "rng_seed"},
                              "participant model");
  detail::check_schema(j, kModelSchema, "participant model");
  try {
    sim::ParticipantModel m;
    detail::read_opt(j, "id", m.id);
    detail::read_opt(j, "base_hit_prob", m.base_hit_prob);
    detail::read_opt(j, "lapse_prob", m.lapse_prob);
    detail::read_opt(j, "learning_rate", m.learning_rate);
    detail::read_ms(j, "latency_mean_ms", m.latency_mean);
    detail::read_ms(j, "latency_spread_ms", m.latency_spread);
    detail::read_opt(j, "body_rotation_prob", m.body_rotation_prob);
    detail::read_opt(j, "severity_tag", m.severity_tag);
    detail::read_opt(j, "rng_seed", m.rng_seed);
    if (j.contains("gaze")) {
      const auto& g = j.at("gaze");
      detail::reject_unknown_keys(g, {"weights", "mean_dwell_ms"}, "participant model gaze");
      detail::read_ms(g, "mean_dwell_ms", m.gaze.mean_dwell);
      if (g.contains("weights")) {
        m.gaze.weights.fill(0.0);
        for (const auto& [name, w] : g.at("weights").items()) {
          m.gaze.weights[static_cast<std::size_t>(parse_gaze_target(name))] = w.get<double>();
        }
      }
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("participant model: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("participant model: ") + e.what());
  }
}

// ---- files and hashing ----------------------------------------------------

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// FNV-1a 64, used for config hashes and header digests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string config_hash(const ProtocolConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

}  // namespace ltm
