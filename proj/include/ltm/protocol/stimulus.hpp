#pragma once

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"

namespace ltm {

// Stronger(x, y): x carries more informative content than y. Strict total
// order within one kind; comparing across kinds is meaningless.
inline bool stronger(const StimulusRank& x, const StimulusRank& y) {
  require(x.kind == y.kind, "stronger(): robot actions and environmental factors are not comparable");
  require(x.rank >= 1 && y.rank >= 1, "stronger(): ranks are positive");
  return x.rank > y.rank;
}

// ST_j: 1 -> V, 2 -> V+S, 3 -> V+S+M.
inline StimulusCombo stimulus_set(int j) {
  require(j >= 1 && j <= 3, "stimulus_set(): j must be 1, 2 or 3");
  unsigned mask = static_cast<unsigned>(Modality::Visual);
  if (j >= 2) mask |= static_cast<unsigned>(Modality::Speech);
  if (j >= 3) mask |= static_cast<unsigned>(Modality::Motion);
  return StimulusCombo{j, mask};
}

}  // namespace ltm
