#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"

namespace ltm {

struct GazeInterval {
  GazeTarget target = GazeTarget::Elsewhere;
  Millis duration{0};
};

// Eye-contact gate of the imitation module. Intervals are back to back in time;
// adjacent intervals on the same robot form one contiguous contact. The first
// robot whose contact reaches `threshold` is activated, and only that one.
inline std::optional<int> imitation_gate(std::span<const GazeInterval> gaze_events, Millis threshold) {
  require(threshold.count() > 0, "imitation_gate(): threshold must be positive");
  GazeTarget run_target = GazeTarget::Elsewhere;  // Elsewhere: no contact under way
  Millis run{0};
  for (const auto& ev : gaze_events) {
    require(ev.duration.count() >= 0, "imitation_gate(): negative interval duration");
    const bool on_robot = ev.target == GazeTarget::Robot1 || ev.target == GazeTarget::Robot2;
    if (!on_robot) {
      run_target = GazeTarget::Elsewhere;
      run = Millis{0};
      continue;
    }
    if (run_target != ev.target) {
      run_target = ev.target;
      run = Millis{0};
    }
    run += ev.duration;
    if (run >= threshold) return ev.target == GazeTarget::Robot1 ? 1 : 2;
  }
  return std::nullopt;
}

// IM_j: robot 1 moves forward/backward, robot 2 raises/lowers its hands.
inline std::vector<GestureCommand> imitation_sequence(int robot_index) {
  require(robot_index == 1 || robot_index == 2, "imitation_sequence(): robot index must be 1 or 2");
  if (robot_index == 1) return {{1, Gesture::Forward}, {1, Gesture::Backward}};
  return {{2, Gesture::RaiseHands}, {2, Gesture::HandsDown}};
}

}  // namespace ltm
