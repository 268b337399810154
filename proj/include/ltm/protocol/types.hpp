#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ltm/error.hpp"

namespace ltm {

using Millis = std::chrono::milliseconds;

enum class Variant { LtmRi, MrisLtm, ImprovedLtmMri };

enum class StimulusKind { RobotAction, EnvFactor };

// RA_i / EF_j: an entry of a stimulus catalog, ordered by rank within its kind.
struct StimulusRank {
  StimulusKind kind = StimulusKind::RobotAction;
  int rank = 1;

  friend bool operator==(const StimulusRank&, const StimulusRank&) = default;
};

enum class Modality : unsigned { Visual = 1u, Speech = 2u, Motion = 4u };

// ST_j for the multi-robot protocol: V, V+S, V+S+M.
struct StimulusCombo {
  int j = 1;
  unsigned modalities = static_cast<unsigned>(Modality::Visual);

  bool contains(Modality m) const { return (modalities & static_cast<unsigned>(m)) != 0; }
  bool subset_of(const StimulusCombo& other) const {
    return (modalities & ~other.modalities) == 0;
  }

  friend bool operator==(const StimulusCombo&, const StimulusCombo&) = default;
};

struct PromptSpec {
  int level = 1;
  StimulusRank robot_action{StimulusKind::RobotAction, 1};
  StimulusRank env_factor{StimulusKind::EnvFactor, 1};
  int robot_index = 1;
  std::optional<StimulusCombo> stimulus_combo;

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

enum class Classification { Hit, Miss, DisqualifiedBodyRotation, Timeout };

enum class GazeTarget { Robot1, Robot2, TargetMonitor, NonTargetMonitor, Elsewhere };

inline constexpr GazeTarget kAllGazeTargets[] = {GazeTarget::Robot1, GazeTarget::Robot2,
                                                 GazeTarget::TargetMonitor,
                                                 GazeTarget::NonTargetMonitor,
                                                 GazeTarget::Elsewhere};

inline GazeTarget robot_target(int robot_index) {
  require(robot_index == 1 || robot_index == 2, "robot index must be 1 or 2");
  return robot_index == 1 ? GazeTarget::Robot1 : GazeTarget::Robot2;
}

struct Response {
  Classification classification = Classification::Miss;
  Millis latency{0};
  GazeTarget gaze_target = GazeTarget::Elsewhere;

  // Binary rating: a hit is 1, everything else 0.
  int rating() const { return classification == Classification::Hit ? 1 : 0; }

  friend bool operator==(const Response&, const Response&) = default;
};

// Raw observation of the participant handed to the cue detector.
struct BehaviorSample {
  GazeTarget gaze_target = GazeTarget::Elsewhere;
  Millis latency{0};
  double torso_rotation_degrees = 0.0;

  friend bool operator==(const BehaviorSample&, const BehaviorSample&) = default;
};

struct Attempt {
  PromptSpec prompt;
  Response response;

  friend bool operator==(const Attempt&, const Attempt&) = default;
};

struct TrialOutcome {
  std::optional<int> hit_level;
  int prompts_issued = 0;
  int escalation_score = 0;
  std::vector<Attempt> attempts;
  bool rewarded = false;
  bool aborted = false;
  std::string abort_reason;

  friend bool operator==(const TrialOutcome&, const TrialOutcome&) = default;
};

// Prompting-function row: which catalog ranks a prompt level combines.
struct PfEntry {
  int ra_rank = 1;
  int ef_rank = 1;

  friend bool operator==(const PfEntry&, const PfEntry&) = default;
};

struct ProtocolConfig {
  Variant variant = Variant::LtmRi;
  int n_max = 6;
  int max_attempts = 2;
  Millis response_window{7000};
  Millis reward_duration{10000};
  Millis eye_contact_threshold{5000};
  double torso_threshold_degrees = 90.0;
  // MRIS only: run the greeting exchange before the first trial and the
  // eye-contact imitation phase after the last one.
  bool inter_robot_script = false;
  bool imitation_phase = false;
  Millis imitation_timeout{60000};
  std::vector<std::string> ra_catalog;
  std::vector<std::string> ef_catalog;
  std::vector<PfEntry> pf_table;  // index = level - 1

  // Prompts per level before escalating; LtmRi and MrisLtm escalate on every miss.
  int attempts_per_level() const {
    return variant == Variant::ImprovedLtmMri ? max_attempts : 1;
  }

  const PfEntry& pf(int level) const {
    require(level >= 1 && level <= n_max, "prompt level outside 1..n_max");
    return pf_table.at(static_cast<std::size_t>(level - 1));
  }

  void validate() const {
    require(n_max >= 1, "n_max must be >= 1");
    require(max_attempts >= 1, "max_attempts must be >= 1");
    require(response_window.count() > 0, "response_window must be positive");
    require(reward_duration.count() >= 0, "reward_duration must be non-negative");
    require(eye_contact_threshold.count() > 0, "eye_contact_threshold must be positive");
    require(torso_threshold_degrees >= 0.0 && torso_threshold_degrees <= 180.0,
            "torso_threshold_degrees must lie in [0, 180]");
    require(!ra_catalog.empty() && !ef_catalog.empty(), "stimulus catalogs must be non-empty");
    require(pf_table.size() == static_cast<std::size_t>(n_max),
            "pf_table must define every level 1..n_max");
    for (std::size_t i = 0; i < pf_table.size(); ++i) {
      const auto& row = pf_table[i];
      require(row.ra_rank >= 1 && row.ra_rank <= static_cast<int>(ra_catalog.size()),
              "pf_table robot-action rank outside catalog");
      require(row.ef_rank >= 1 && row.ef_rank <= static_cast<int>(ef_catalog.size()),
              "pf_table environmental-factor rank outside catalog");
      if (i > 0) {
        require(row.ra_rank >= pf_table[i - 1].ra_rank && row.ef_rank >= pf_table[i - 1].ef_rank,
                "pf_table ranks must be non-decreasing in level");
      }
    }
    if (variant == Variant::MrisLtm) {
      require(pf_table.back().ra_rank <= 3, "MRIS robot-action ranks map onto ST_1..ST_3");
    }
  }

  // Six-level joint-attention instance for LtmRi / ImprovedLtmMri:
  // 1-2 head turn + "Look" on a picture, 3-4 add pointing, 5 audio clip, 6 video clip.
  // MRIS: visual, +speech, +motion cues without environmental factors.
  static ProtocolConfig defaults(Variant v) {
    ProtocolConfig cfg;
    cfg.variant = v;
    if (v == Variant::MrisLtm) {
      cfg.n_max = 3;
      cfg.ra_catalog = {"visual", "visual+speech", "visual+speech+motion"};
      cfg.ef_catalog = {"none"};
      cfg.pf_table = {{1, 1}, {2, 1}, {3, 1}};
      cfg.inter_robot_script = true;
      cfg.imitation_phase = true;
    } else {
      cfg.ra_catalog = {"head turn + \"Look!\"", "head turn + point + \"Look over there!\""};
      cfg.ef_catalog = {"static picture", "audio clip", "video clip"};
      cfg.pf_table = {{1, 1}, {1, 1}, {2, 1}, {2, 1}, {2, 2}, {2, 3}};
    }
    return cfg;
  }

  // Extends or truncates pf_table to n_max, saturating at the last row.
  void resize_levels(int levels) {
    require(levels >= 1, "n_max must be >= 1");
    n_max = levels;
    if (pf_table.empty()) pf_table.push_back({1, 1});
    const PfEntry last = pf_table.back();
    pf_table.resize(static_cast<std::size_t>(levels), last);
  }
};

enum class Gesture { Forward, Backward, RaiseHands, HandsDown };

struct GestureCommand {
  int robot_index = 1;
  Gesture gesture = Gesture::Forward;

  friend bool operator==(const GestureCommand&, const GestureCommand&) = default;
};

// ---- names used by logs, configs and the CLI ------------------------------

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::LtmRi: return "ltm-ri";
    case Variant::MrisLtm: return "mris";
    case Variant::ImprovedLtmMri: return "improved";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "ltm-ri") return Variant::LtmRi;
  if (s == "mris") return Variant::MrisLtm;
  if (s == "improved") return Variant::ImprovedLtmMri;
  throw ContractViolation("unknown variant '" + std::string(s) + "' (expected ltm-ri|mris|improved)");
}

inline std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::Hit: return "Hit";
    case Classification::Miss: return "Miss";
    case Classification::DisqualifiedBodyRotation: return "DisqualifiedBodyRotation";
    case Classification::Timeout: return "Timeout";
  }
  return "?";
}

inline Classification parse_classification(std::string_view s) {
  if (s == "Hit") return Classification::Hit;
  if (s == "Miss") return Classification::Miss;
  if (s == "DisqualifiedBodyRotation") return Classification::DisqualifiedBodyRotation;
  if (s == "Timeout") return Classification::Timeout;
  throw ContractViolation("unknown classification '" + std::string(s) + "'");
}

inline std::string_view to_string(GazeTarget g) {
  switch (g) {
    case GazeTarget::Robot1: return "Robot1";
    case GazeTarget::Robot2: return "Robot2";
    case GazeTarget::TargetMonitor: return "TargetMonitor";
    case GazeTarget::NonTargetMonitor: return "NonTargetMonitor";
    case GazeTarget::Elsewhere: return "Elsewhere";
  }
  return "?";
}

inline GazeTarget parse_gaze_target(std::string_view s) {
  for (auto g : kAllGazeTargets) {
    if (to_string(g) == s) return g;
  }
  throw ContractViolation("unknown gaze target '" + std::string(s) + "'");
}

inline std::string_view to_string(Gesture g) {
  switch (g) {
    case Gesture::Forward: return "Forward";
    case Gesture::Backward: return "Backward";
    case Gesture::RaiseHands: return "RaiseHands";
    case Gesture::HandsDown: return "HandsDown";
  }
  return "?";
}

}  // namespace ltm
