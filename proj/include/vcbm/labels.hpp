#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "vcbm/errors.hpp"

namespace vcbm {

inline constexpr std::size_t kNumManeuvers = 7;
inline constexpr std::size_t kNumEgoExplanations = 17;
inline constexpr std::size_t kNumGazeExplanations = 15;

using ExplanationBits = std::array<std::uint8_t, kNumEgoExplanations>;

enum class Split : int { kTrain = 0, kVal = 1, kTest = 2 };

inline const std::array<std::string, 3>& split_names() {
  static const std::array<std::string, 3> names = {"train", "val", "test"};
  return names;
}

inline std::string split_name(Split s) {
  return split_names()[static_cast<std::size_t>(s)];
}

inline Split split_from_name(const std::string& name) {
  const auto& names = split_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Split>(i);
  }
  throw data_error("unknown split name: '" + name + "'");
}

enum class Maneuver : int {
  kStraight = 0,      // ST
  kRightTurn = 1,     // RT
  kLeftTurn = 2,      // LT
  kRightLaneChange = 3,  // RLC
  kLeftLaneChange = 4,   // LLC
  kStop = 5,          // SS (stop / slow down)
  kUTurn = 6,         // UT
};

inline const std::array<std::string, kNumManeuvers>& maneuver_codes() {
  static const std::array<std::string, kNumManeuvers> codes = {
      "ST", "RT", "LT", "RLC", "LLC", "SS", "UT"};
  return codes;
}

inline std::string maneuver_code(Maneuver m) {
  return maneuver_codes()[static_cast<std::size_t>(m)];
}

inline Maneuver maneuver_from_code(const std::string& code) {
  const auto& codes = maneuver_codes();
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] == code) return static_cast<Maneuver>(i);
  }
  throw data_error("unknown maneuver code: '" + code + "'");
}

// Ego-vehicle explanation vocabulary. Ids are stable; the synthetic generator
// plants one visual glyph per id (see synth.hpp for the geometry).
inline const std::array<std::string, kNumEgoExplanations>& ego_explanation_names() {
  static const std::array<std::string, kNumEgoExplanations> names = {
      "traffic light is green",          // 0
      "traffic light is red",            // 1
      "left indicator blinking",         // 2
      "right indicator blinking",        // 3
      "approaching an intersection",     // 4
      "obstacle ahead in lane",          // 5
      "obstacle on the left lane",       // 6
      "obstacle on the right lane",      // 7
      "road clear on the left",          // 8
      "road clear on the right",         // 9
      "pedestrian crossing ahead",       // 10
      "traffic light turning green",     // 11
      "traffic light turning red",       // 12
      "u-turn zone marked ahead",        // 13
      "lane merges from the left",       // 14
      "lane merges from the right",      // 15
      "passing an intersection",         // 16
  };
  return names;
}

// Human gaze region vocabulary: a 5x3 grid over the frame (columns within
// rows), id = row * 5 + col. Schema only; no prediction head consumes it.
inline const std::array<std::string, kNumGazeExplanations>& gaze_explanation_names() {
  static const std::array<std::string, kNumGazeExplanations> names = {
      "gaze upper far left",  "gaze upper left",  "gaze upper center",
      "gaze upper right",     "gaze upper far right",
      "gaze middle far left", "gaze middle left", "gaze middle center",
      "gaze middle right",    "gaze middle far right",
      "gaze lower far left",  "gaze lower left",  "gaze lower center",
      "gaze lower right",     "gaze lower far right",
  };
  return names;
}

}  // namespace vcbm
