#pragma once

#include "ltm/error.hpp"
#include "ltm/protocol/types.hpp"

namespace ltm {

inline constexpr double kDefaultTorsoThresholdDegrees = 90.0;

// Interactive cue detection. A response counts only if the gaze lands on the
// expected target inside the window without the participant turning the whole
// body toward it.
inline Response classify_behavior(const BehaviorSample& sample, GazeTarget expected_target, Millis window,
                                  double torso_threshold_degrees = kDefaultTorsoThresholdDegrees) {
  require(sample.latency.count() >= 0, "classify_behavior(): negative latency");
  require(window.count() > 0, "classify_behavior(): window must be positive");

  Response r;
  r.latency = sample.latency;
  r.gaze_target = sample.gaze_target;
  if (sample.latency > window) {
    r.classification = Classification::Timeout;
  } else if (sample.gaze_target != expected_target) {
    r.classification = Classification::Miss;
  } else if (sample.torso_rotation_degrees > torso_threshold_degrees) {
    r.classification = Classification::DisqualifiedBodyRotation;
  } else {
    r.classification = Classification::Hit;
  }
  return r;
}

}  // namespace ltm
