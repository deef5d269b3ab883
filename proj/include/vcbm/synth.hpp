#pragma once

// Synthetic desk-scale driving clips with planted concept glyphs.
//
// Each of the 17 ego explanations is a colored glyph with a fixed home cell
// on a 4x4 grid in unit coordinates, so geometry is resolution agnostic.
// A deterministic rule table maps the set of planted concepts to the
// maneuver label; the generator assembles a core template per maneuver,
// sprinkles decor concepts, and drops any decor that would flip the rule,
// so the label always matches the rule applied to the annotation bits.
//
// Temporal structure is phase based (visible in first half, second half,
// blinking, or switching color at the midpoint) so that frame subsampling
// at low shuffle severity preserves it while segment-level shuffling at
// high severity destroys it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "vcbm/encoder.hpp"
#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"
#include "vcbm/rng.hpp"

namespace vcbm {

// ---------------------------------------------------------------------------
// Annotation record

struct AnnotationRecord {
  std::string sample_id;
  Maneuver maneuver = Maneuver::kStraight;
  ExplanationBits ego{};  // 17 bits
  int gaze_explanation = 0;
  Split split = Split::kTrain;
  std::string front_path;
  std::string gaze_path;
  std::string meta_path;

  void validate() const {
    if (sample_id.empty()) throw data_error("annotation: empty sample_id");
    std::size_t on = 0;
    for (auto b : ego) {
      if (b > 1) throw data_error("annotation: explanation bit out of {0,1}");
      on += b;
    }
    if (on == 0) {
      throw data_error("annotation '" + sample_id +
                       "': at least one ego explanation required");
    }
    if (gaze_explanation < 0 ||
        gaze_explanation >= static_cast<int>(kNumGazeExplanations)) {
      throw data_error("annotation '" + sample_id +
                       "': gaze explanation id out of range");
    }
  }
};

// ---------------------------------------------------------------------------
// Rule table: concepts -> maneuver. Priority order matters; first hit wins.

inline Maneuver rule_maneuver(const ExplanationBits& e) {
  auto has = [&](int j) { return e[static_cast<std::size_t>(j)] != 0; };
  if (has(13)) return Maneuver::kUTurn;                    // u-turn zone
  if (has(1) || has(12) || has(10) ||
      (has(5) && !has(8) && !has(9))) {
    return Maneuver::kStop;  // red light, turning red, crossing, blocked
  }
  if (has(2) && !has(6)) return Maneuver::kLeftTurn;       // left indicator
  if (has(3) && !has(7)) return Maneuver::kRightTurn;      // right indicator
  if ((has(5) && has(8)) || has(14)) return Maneuver::kLeftLaneChange;
  if ((has(5) && has(9)) || has(15)) return Maneuver::kRightLaneChange;
  return Maneuver::kStraight;
}

// ---------------------------------------------------------------------------
// Glyph table

enum class GlyphPhase {
  kAlways,
  kBlink,        // square wave, period max(2, T/8) frames
  kFirstHalf,    // visible for t < T/2
  kSecondHalf,   // visible for t >= T/2
  kRedThenGreen, // always visible; red before T/2, green after
  kGreenThenRed,
};

struct GlyphSpec {
  int concept_id;
  double cx, cy;  // center, unit coords
  double w, h;    // extent, unit coords
  std::array<double, 3> color;
  GlyphPhase phase = GlyphPhase::kAlways;
  bool striped = false;  // vertical bright/dark stripes (pedestrian crossing)
};

namespace synth_detail {
inline constexpr std::array<double, 3> kRed = {0.90, 0.10, 0.10};
inline constexpr std::array<double, 3> kGreen = {0.10, 0.85, 0.10};
inline constexpr std::array<double, 3> kAmber = {0.95, 0.70, 0.10};
inline constexpr std::array<double, 3> kBrown = {0.55, 0.35, 0.15};
inline constexpr std::array<double, 3> kPale = {0.75, 0.78, 0.80};
inline constexpr std::array<double, 3> kWhite = {0.85, 0.85, 0.85};
inline constexpr std::array<double, 3> kCyan = {0.10, 0.80, 0.90};
inline constexpr std::array<double, 3> kYellow = {0.90, 0.85, 0.15};
inline constexpr std::array<double, 3> kOrange = {0.92, 0.68, 0.10};
}  // namespace synth_detail

inline const std::array<GlyphSpec, kNumEgoExplanations>& concept_glyphs() {
  using namespace synth_detail;
  static const std::array<GlyphSpec, kNumEgoExplanations> glyphs = {{
      // 0 green light: signal box, upper middle-left cell
      {0, 0.375, 0.125, 0.14, 0.14, kGreen, GlyphPhase::kAlways},
      // 1 red light: same box
      {1, 0.375, 0.125, 0.14, 0.14, kRed, GlyphPhase::kAlways},
      // 2 left indicator: blinking square hugging the left edge
      {2, 0.095, 0.375, 0.12, 0.12, kAmber, GlyphPhase::kBlink},
      // 3 right indicator: mirrored
      {3, 0.905, 0.375, 0.12, 0.12, kAmber, GlyphPhase::kBlink},
      // 4 approaching an intersection: wide bar, second half only
      {4, 0.500, 0.275, 0.80, 0.05, kWhite, GlyphPhase::kSecondHalf},
      // 5 obstacle ahead: brown block low center (slightly left of center)
      {5, 0.440, 0.800, 0.16, 0.16, kBrown, GlyphPhase::kAlways},
      // 6 obstacle left / 7 obstacle right: identical appearance, mirrored
      {6, 0.125, 0.875, 0.14, 0.14, kBrown, GlyphPhase::kAlways},
      {7, 0.875, 0.875, 0.14, 0.14, kBrown, GlyphPhase::kAlways},
      // 8 clear left / 9 clear right: pale strips on frame edges
      {8, 0.035, 0.750, 0.05, 0.38, kPale, GlyphPhase::kAlways},
      {9, 0.965, 0.750, 0.05, 0.38, kPale, GlyphPhase::kAlways},
      // 10 pedestrian crossing: striped band
      {10, 0.500, 0.670, 0.56, 0.10, kWhite, GlyphPhase::kAlways, true},
      // 11 turning green / 12 turning red: signal box color switch
      {11, 0.375, 0.125, 0.14, 0.14, kGreen, GlyphPhase::kRedThenGreen},
      {12, 0.375, 0.125, 0.14, 0.14, kRed, GlyphPhase::kGreenThenRed},
      // 13 u-turn zone: cyan box next to the signal box
      {13, 0.625, 0.125, 0.14, 0.14, kCyan, GlyphPhase::kAlways},
      // 14 merges left / 15 merges right: near-identical yellows, mirrored
      {14, 0.160, 0.625, 0.13, 0.13, kYellow, GlyphPhase::kAlways},
      {15, 0.840, 0.625, 0.13, 0.13, kOrange, GlyphPhase::kAlways},
      // 16 passing an intersection: same bar as 4, first half only
      {16, 0.500, 0.275, 0.80, 0.05, kWhite, GlyphPhase::kFirstHalf},
  }};
  return glyphs;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderOptions {
  double noise = 0.02;             // gaussian pixel noise stddev
  double position_jitter = 2.0;    // max per-sample glyph shift, pixels
  double intensity_jitter = 0.08;  // max relative color scale change
  bool quantize = true;            // snap to the uint8 grid like stored clips
};

namespace synth_detail {

inline std::size_t blink_half_period(std::size_t t_total) {
  return std::max<std::size_t>(1, t_total / 16);  // half of max(2, T/8)
}

inline bool glyph_visible(GlyphPhase phase, std::size_t t, std::size_t t_total) {
  switch (phase) {
    case GlyphPhase::kAlways:
    case GlyphPhase::kRedThenGreen:
    case GlyphPhase::kGreenThenRed:
      return true;
    case GlyphPhase::kBlink:
      return (t / blink_half_period(t_total)) % 2 == 0;
    case GlyphPhase::kFirstHalf:
      return t < t_total / 2;
    case GlyphPhase::kSecondHalf:
      return t >= t_total / 2;
  }
  return true;
}

inline std::array<double, 3> glyph_color(const GlyphSpec& g, std::size_t t,
                                         std::size_t t_total) {
  const bool second = t >= t_total / 2;
  if (g.phase == GlyphPhase::kRedThenGreen) return second ? kGreen : kRed;
  if (g.phase == GlyphPhase::kGreenThenRed) return second ? kRed : kGreen;
  return g.color;
}

inline double quantize_unit(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::round(v * 255.0) / 255.0;
}

}  // namespace synth_detail

// Static road backdrop: vertical brightness ramp plus dashed lane lines.
// Pure function of the clip shape so tests can subtract it exactly.
inline void render_background(VideoClip& clip) {
  const std::size_t lane_a = clip.w / 3, lane_b = (2 * clip.w) / 3;
  for (std::size_t t = 0; t < clip.t; ++t) {
    for (std::size_t y = 0; y < clip.h; ++y) {
      const double base =
          0.10 + 0.06 * static_cast<double>(y) / static_cast<double>(clip.h);
      for (std::size_t x = 0; x < clip.w; ++x) {
        double v = base;
        if ((x == lane_a || x == lane_b) && (y / 4) % 2 == 0) v = 0.30;
        for (std::size_t c = 0; c < clip.c; ++c) clip.at(t, y, x, c) = v;
      }
    }
  }
}

// Paints one glyph into every frame where its phase makes it visible.
// dx/dy are per-sample pixel offsets, scale is a per-sample intensity factor.
inline void paint_glyph(VideoClip& clip, const GlyphSpec& g, double dx,
                        double dy, double scale) {
  const double wpx = static_cast<double>(clip.w);
  const double hpx = static_cast<double>(clip.h);
  const long x0 = std::lround((g.cx - g.w / 2) * wpx + dx);
  const long x1 = std::lround((g.cx + g.w / 2) * wpx + dx);
  const long y0 = std::lround((g.cy - g.h / 2) * hpx + dy);
  const long y1 = std::lround((g.cy + g.h / 2) * hpx + dy);
  const long xa = std::max(0L, x0), xb = std::min<long>(clip.w, x1);
  const long ya = std::max(0L, y0), yb = std::min<long>(clip.h, y1);
  for (std::size_t t = 0; t < clip.t; ++t) {
    if (!synth_detail::glyph_visible(g.phase, t, clip.t)) continue;
    std::array<double, 3> col = synth_detail::glyph_color(g, t, clip.t);
    for (long y = ya; y < yb; ++y) {
      for (long x = xa; x < xb; ++x) {
        std::array<double, 3> px = col;
        if (g.striped && ((x - x0) / 3) % 2 == 1) px = {0.20, 0.20, 0.20};
        for (std::size_t c = 0; c < clip.c && c < 3; ++c) {
          clip.at(t, static_cast<std::size_t>(y), static_cast<std::size_t>(x),
                  c) = std::clamp(px[c] * scale, 0.0, 1.0);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Gaze views

// Zeroes every pixel of `frame` (one t-slice of `clip`) farther than `radius`
// from (u, v); pixels at exactly the radius are kept.
inline void gaze_crop_frame(VideoClip& clip, std::size_t t, double u, double v,
                            double radius) {
  if (t >= clip.t) throw data_error("gaze_crop: frame index out of range");
  if (radius < 0.0) throw data_error("gaze_crop: radius must be non-negative");
  if (u < 0.0 || u >= static_cast<double>(clip.w) || v < 0.0 ||
      v >= static_cast<double>(clip.h)) {
    throw data_error("gaze_crop: center (" + std::to_string(u) + ", " +
                     std::to_string(v) + ") outside frame");
  }
  const double r2 = radius * radius;
  for (std::size_t y = 0; y < clip.h; ++y) {
    for (std::size_t x = 0; x < clip.w; ++x) {
      const double ddx = static_cast<double>(x) - u;
      const double ddy = static_cast<double>(y) - v;
      if (ddx * ddx + ddy * ddy > r2) {
        for (std::size_t c = 0; c < clip.c; ++c) clip.at(t, y, x, c) = 0.0;
      }
    }
  }
}

// Blends a filled marker disc into one frame around the gaze point.
inline void gaze_overlay_frame(VideoClip& clip, std::size_t t, double u,
                               double v, double radius, double alpha) {
  if (t >= clip.t) throw data_error("gaze_overlay: frame index out of range");
  static constexpr std::array<double, 3> kMarker = {1.00, 0.20, 0.90};
  const double r2 = radius * radius;
  const long xa = std::max(0L, std::lround(u - radius) - 1);
  const long xb = std::min<long>(clip.w, std::lround(u + radius) + 2);
  const long ya = std::max(0L, std::lround(v - radius) - 1);
  const long yb = std::min<long>(clip.h, std::lround(v + radius) + 2);
  for (long y = ya; y < yb; ++y) {
    for (long x = xa; x < xb; ++x) {
      const double ddx = static_cast<double>(x) - u;
      const double ddy = static_cast<double>(y) - v;
      if (ddx * ddx + ddy * ddy > r2) continue;
      for (std::size_t c = 0; c < clip.c && c < 3; ++c) {
        double& px = clip.at(t, static_cast<std::size_t>(y),
                             static_cast<std::size_t>(x), c);
        px = std::clamp((1.0 - alpha) * px + alpha * kMarker[c], 0.0, 1.0);
      }
    }
  }
}

using GazeTrajectory = std::vector<std::array<double, 2>>;  // (u, v) px

enum class GazeVariantKind { kNone, kOverlaid, kCrop };

struct GazeVariant {
  GazeVariantKind kind = GazeVariantKind::kCrop;
  double radius = 16.0;       // crop radius or overlay disc radius, px
  double overlay_alpha = 0.6;
};

inline GazeVariant parse_gaze_variant(const std::string& text) {
  GazeVariant v;
  if (text == "none") {
    v.kind = GazeVariantKind::kNone;
    return v;
  }
  if (text == "overlaid") {
    v.kind = GazeVariantKind::kOverlaid;
    return v;
  }
  if (text == "crop" || text.rfind("crop:", 0) == 0) {
    v.kind = GazeVariantKind::kCrop;
    if (text.size() > 5) {
      try {
        v.radius = std::stod(text.substr(5));
      } catch (const std::exception&) {
        throw data_error("gaze variant: bad crop radius in '" + text + "'");
      }
      if (v.radius < 0.0) throw data_error("gaze variant: negative radius");
    }
    return v;
  }
  throw data_error("unknown gaze variant '" + text +
                   "' (expected none, overlaid, crop, or crop:R)");
}

inline std::string gaze_variant_name(const GazeVariant& v) {
  switch (v.kind) {
    case GazeVariantKind::kNone:
      return "none";
    case GazeVariantKind::kOverlaid:
      return "overlaid";
    case GazeVariantKind::kCrop: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "crop:%g", v.radius);
      return buf;
    }
  }
  return "none";
}

// Derives the gaze-view clip from a front clip plus a per-frame trajectory.
inline VideoClip derive_gaze_view(const VideoClip& front,
                                  const GazeTrajectory& trajectory,
                                  const GazeVariant& variant) {
  if (trajectory.size() != front.t) {
    throw data_error("gaze view: trajectory length " +
                     std::to_string(trajectory.size()) + " != clip frames " +
                     std::to_string(front.t));
  }
  VideoClip gaze = front;
  gaze.view = View::kGaze;
  if (variant.kind == GazeVariantKind::kNone) {
    std::fill(gaze.voxels.begin(), gaze.voxels.end(), 0.0);
    return gaze;
  }
  for (std::size_t t = 0; t < gaze.t; ++t) {
    if (variant.kind == GazeVariantKind::kCrop) {
      gaze_crop_frame(gaze, t, trajectory[t][0], trajectory[t][1],
                      variant.radius);
    } else {
      gaze_overlay_frame(gaze, t, trajectory[t][0], trajectory[t][1],
                         variant.radius, variant.overlay_alpha);
    }
  }
  return gaze;
}

// Gaze explanation id on the 5x3 grid from the mean trajectory position.
inline int gaze_region_id(const GazeTrajectory& trajectory, std::size_t w,
                          std::size_t h) {
  if (trajectory.empty()) throw data_error("gaze region: empty trajectory");
  double mu = 0.0, mv = 0.0;
  for (const auto& p : trajectory) {
    mu += p[0];
    mv += p[1];
  }
  mu /= static_cast<double>(trajectory.size());
  mv /= static_cast<double>(trajectory.size());
  const int col = std::min(4, static_cast<int>(mu * 5.0 / static_cast<double>(w)));
  const int row = std::min(2, static_cast<int>(mv * 3.0 / static_cast<double>(h)));
  return row * 5 + col;
}

// ---------------------------------------------------------------------------
// Shuffle severity

inline constexpr std::size_t kShuffleSegments = 16;

inline bool valid_severity(std::size_t s) {
  return s == 1 || s == 2 || s == 4 || s == 8 || s == 16;
}

// Picks 16 frame indices from a T-frame clip. The clip is divided into 16
// segments (remainder frames attach to the last); groups of s consecutive
// segments are merged and s frames are sampled without replacement from each
// merged segment, listed in ascending order. Severity 1 on a 16-frame clip is
// the identity.
inline std::vector<std::size_t> shuffle_severity_indices(std::size_t t_total,
                                                         std::size_t severity,
                                                         Rng& rng) {
  if (!valid_severity(severity)) {
    throw data_error("shuffle severity must be one of {1,2,4,8,16}, got " +
                     std::to_string(severity));
  }
  if (t_total < kShuffleSegments) {
    throw data_error("shuffle severity needs at least 16 frames, got " +
                     std::to_string(t_total));
  }
  const std::size_t seg_len = t_total / kShuffleSegments;
  const std::size_t merged_count = kShuffleSegments / severity;
  std::vector<std::size_t> indices;
  indices.reserve(kShuffleSegments);
  for (std::size_t m = 0; m < merged_count; ++m) {
    const std::size_t begin = m * severity * seg_len;
    const std::size_t end =
        (m + 1 == merged_count) ? t_total : (m + 1) * severity * seg_len;
    auto picks = rng.sample_without_replacement(end - begin, severity);
    for (auto p : picks) indices.push_back(begin + p);
  }
  return indices;
}

// Builds a new clip from the selected frames; frame_times become the source
// indices so downstream temporal coordinates reflect the original timeline.
inline VideoClip select_frames(const VideoClip& clip,
                               const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw data_error("select_frames: empty index list");
  VideoClip out = VideoClip::make(clip.view, indices.size(), clip.h, clip.w,
                                  clip.c);
  const std::size_t frame_size = clip.h * clip.w * clip.c;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= clip.t) {
      throw data_error("select_frames: index " + std::to_string(indices[i]) +
                       " out of range");
    }
    std::copy_n(clip.voxels.begin() + indices[i] * frame_size, frame_size,
                out.voxels.begin() + i * frame_size);
    out.frame_times[i] = static_cast<double>(indices[i]);
  }
  return out;
}

inline GazeTrajectory select_trajectory(const GazeTrajectory& trajectory,
                                        const std::vector<std::size_t>& indices) {
  GazeTrajectory out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= trajectory.size()) {
      throw data_error("select_trajectory: index out of range");
    }
    out.push_back(trajectory[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sample assembly

struct GenerationConfig {
  std::size_t n = 700;
  std::uint64_t seed = 0;
  std::size_t t = 32, h = 64, w = 64, c = 3;
  // Probability of each maneuver, indexed by Maneuver code order:
  // ST, RT, LT, RLC, LLC, SS, UT.
  std::array<double, kNumManeuvers> frequency_profile = {
      0.25, 0.15, 0.15, 0.10, 0.10, 0.20, 0.05};
  RenderOptions render;
  GazeVariant stored_gaze;  // variant baked into the stored gaze clip

  void validate() const {
    if (n == 0) throw data_error("generate: n must be positive");
    if (t < kShuffleSegments) {
      throw data_error("generate: need at least 16 frames per clip");
    }
    if (h < 16 || w < 16) throw data_error("generate: frame too small");
    if (c != 3) throw data_error("generate: expected 3 channels");
    double sum = 0.0;
    for (double p : frequency_profile) {
      if (p < 0.0) throw data_error("generate: negative frequency");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw data_error("generate: frequency profile must sum to 1");
    }
  }
};

struct SyntheticSample {
  AnnotationRecord record;
  VideoClip front;
  VideoClip gaze;  // stored variant render (crop by default)
  GazeTrajectory trajectory;
};

namespace synth_detail {

inline Maneuver draw_maneuver(const std::array<double, kNumManeuvers>& profile,
                              Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t m = 0; m < kNumManeuvers; ++m) {
    acc += profile[m];
    if (u < acc) return static_cast<Maneuver>(m);
  }
  return static_cast<Maneuver>(kNumManeuvers - 1);
}

// Core concepts that force the maneuver, chosen among variants.
inline std::vector<int> core_template(Maneuver m, Rng& rng) {
  switch (m) {
    case Maneuver::kStraight:
      return rng.uniform() < 0.55 ? std::vector<int>{0} : std::vector<int>{11};
    case Maneuver::kRightTurn:
      return {3};
    case Maneuver::kLeftTurn:
      return {2};
    case Maneuver::kRightLaneChange:
      return rng.uniform() < 0.5 ? std::vector<int>{5, 9}
                                 : std::vector<int>{15};
    case Maneuver::kLeftLaneChange:
      return rng.uniform() < 0.5 ? std::vector<int>{5, 8}
                                 : std::vector<int>{14};
    case Maneuver::kStop: {
      const double u = rng.uniform();
      if (u < 0.40) return {1, 10};  // red light and crossing always co-occur
      if (u < 0.75) return {12};
      return {5};
    }
    case Maneuver::kUTurn:
      return {13};
  }
  return {0};
}

// Optional decor concepts with draw probabilities, per maneuver.
inline std::vector<std::pair<int, double>> decor_candidates(Maneuver m) {
  switch (m) {
    case Maneuver::kStraight:
      return {{8, 0.30}, {9, 0.30}, {6, 0.15}, {7, 0.15}};
    case Maneuver::kRightTurn:
      return {{0, 0.30}, {9, 0.30}, {6, 0.20}};
    case Maneuver::kLeftTurn:
      return {{0, 0.30}, {8, 0.30}, {7, 0.20}};
    case Maneuver::kRightLaneChange:
    case Maneuver::kLeftLaneChange:
      return {{0, 0.25}};
    case Maneuver::kStop:
      return {};
    case Maneuver::kUTurn:
      return {{3, 0.35}, {9, 0.35}};
  }
  return {};
}

// Gaze target: center of the concept that primarily drives the maneuver.
inline std::array<double, 2> gaze_target(const ExplanationBits& e, Maneuver m,
                                         std::size_t w, std::size_t h) {
  auto center_of = [&](int id) -> std::array<double, 2> {
    const auto& g = concept_glyphs()[static_cast<std::size_t>(id)];
    return {g.cx * static_cast<double>(w), g.cy * static_cast<double>(h)};
  };
  auto first_present = [&](std::initializer_list<int> ids) -> int {
    for (int id : ids) {
      if (e[static_cast<std::size_t>(id)]) return id;
    }
    return -1;
  };
  int target = -1;
  switch (m) {
    case Maneuver::kUTurn:
      target = first_present({13});
      break;
    case Maneuver::kStop:
      target = first_present({1, 12, 10, 5});
      break;
    case Maneuver::kLeftTurn:
      target = first_present({2});
      break;
    case Maneuver::kRightTurn:
      target = first_present({3});
      break;
    case Maneuver::kLeftLaneChange:
      target = first_present({14, 5});
      break;
    case Maneuver::kRightLaneChange:
      target = first_present({15, 5});
      break;
    case Maneuver::kStraight:
      target = first_present({0, 11});
      break;
  }
  if (target < 0) {
    return {0.5 * static_cast<double>(w), 0.45 * static_cast<double>(h)};
  }
  return center_of(target);
}

}  // namespace synth_detail

// Generates one sample from its own derived RNG stream. `index` only names
// the sample; all randomness comes from `rng`.
inline SyntheticSample generate_sample(const GenerationConfig& cfg,
                                       std::size_t index, Rng& rng) {
  const Maneuver maneuver =
      synth_detail::draw_maneuver(cfg.frequency_profile, rng);

  ExplanationBits bits{};
  for (int id : synth_detail::core_template(maneuver, rng)) {
    bits[static_cast<std::size_t>(id)] = 1;
  }
  if (rule_maneuver(bits) != maneuver) {
    throw error("generator bug: core template violates rule table");
  }

  // Phase decor: at most one of {approaching (4), passing (16)}.
  {
    const double u = rng.uniform();
    if (u < 0.35) {
      bits[4] = 1;
    } else if (u < 0.70) {
      bits[16] = 1;
    }
  }
  // Maneuver-specific decor, dropped when it would change the label.
  for (const auto& [id, p] : synth_detail::decor_candidates(maneuver)) {
    const bool take = rng.uniform() < p;
    if (!take) continue;
    ExplanationBits trial = bits;
    trial[static_cast<std::size_t>(id)] = 1;
    if (rule_maneuver(trial) == maneuver) bits = trial;
  }
  if (rule_maneuver(bits) != maneuver) {
    throw error("generator bug: decor violates rule table");
  }

  // Render the front view.
  VideoClip front = VideoClip::make(View::kFront, cfg.t, cfg.h, cfg.w, cfg.c);
  render_background(front);
  const double pj = cfg.render.position_jitter;
  const double ij = cfg.render.intensity_jitter;
  for (std::size_t id = 0; id < kNumEgoExplanations; ++id) {
    if (!bits[id]) continue;
    const double dx = pj > 0.0 ? rng.uniform(-pj, pj) : 0.0;
    const double dy = pj > 0.0 ? rng.uniform(-pj, pj) : 0.0;
    const double scale = ij > 0.0 ? 1.0 + rng.uniform(-ij, ij) : 1.0;
    paint_glyph(front, concept_glyphs()[id], dx, dy, scale);
  }
  if (cfg.render.noise > 0.0) {
    for (double& v : front.voxels) {
      v = std::clamp(v + rng.normal(0.0, cfg.render.noise), 0.0, 1.0);
    }
  }
  if (cfg.render.quantize) {
    for (double& v : front.voxels) v = synth_detail::quantize_unit(v);
  }

  // Gaze trajectory: jittered fixation on the rule-driving glyph.
  const auto target = synth_detail::gaze_target(bits, maneuver, cfg.w, cfg.h);
  GazeTrajectory trajectory(cfg.t);
  for (std::size_t t = 0; t < cfg.t; ++t) {
    double u = target[0] + rng.normal(0.0, 1.5);
    double v = target[1] + rng.normal(0.0, 1.5);
    u = std::clamp(u, 0.0, static_cast<double>(cfg.w) - 1.0);
    v = std::clamp(v, 0.0, static_cast<double>(cfg.h) - 1.0);
    trajectory[t] = {u, v};
  }

  SyntheticSample sample;
  sample.front = std::move(front);
  sample.trajectory = std::move(trajectory);
  sample.gaze = derive_gaze_view(sample.front, sample.trajectory,
                                 cfg.stored_gaze);

  char id_buf[16];
  std::snprintf(id_buf, sizeof(id_buf), "s%06zu", index);
  sample.record.sample_id = id_buf;
  sample.record.maneuver = maneuver;
  sample.record.ego = bits;
  sample.record.gaze_explanation =
      gaze_region_id(sample.trajectory, cfg.w, cfg.h);
  sample.record.validate();
  return sample;
}

inline std::vector<SyntheticSample> generate(const GenerationConfig& cfg) {
  cfg.validate();
  std::vector<SyntheticSample> samples;
  samples.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Rng rng = Rng::derive(cfg.seed, {0x73616d70u, i});
    samples.push_back(generate_sample(cfg, i, rng));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Stratified split

// Assigns train/val/test per maneuver stratum: seeded shuffle, then
// largest-remainder allocation of the ratio targets (ties favor train, then
// val). Strata with fewer than 3 members go entirely to train.
inline void stratified_split(std::vector<AnnotationRecord>& records,
                             const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
  if (records.empty()) throw data_error("stratified_split: no records");
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw data_error("stratified_split: negative ratio");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw data_error("stratified_split: ratios must sum to 1");
  }
  std::array<std::vector<std::size_t>, kNumManeuvers> strata;
  for (std::size_t i = 0; i < records.size(); ++i) {
    strata[static_cast<std::size_t>(records[i].maneuver)].push_back(i);
  }
  for (std::size_t m = 0; m < kNumManeuvers; ++m) {
    auto& idx = strata[m];
    if (idx.empty()) continue;
    if (idx.size() < 3) {
      for (auto i : idx) records[i].split = Split::kTrain;
      continue;
    }
    Rng rng = Rng::derive(seed, {0x73706c69u, m});
    rng.shuffle(idx);
    const double n = static_cast<double>(idx.size());
    std::array<std::size_t, 3> counts;
    std::array<double, 3> frac;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double target = ratios[k] * n;
      counts[k] = static_cast<std::size_t>(std::floor(target));
      frac[k] = target - std::floor(target);
      assigned += counts[k];
    }
    while (assigned < idx.size()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 3; ++k) {
        if (frac[k] > frac[best]) best = k;
      }
      counts[best] += 1;
      frac[best] = -1.0;
      assigned += 1;
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < counts[k]; ++j, ++pos) {
        records[idx[pos]].split = static_cast<Split>(k);
      }
    }
  }
}

}  // namespace vcbm
