#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gestop/error.hpp"

namespace gestop {

inline constexpr std::size_t kLandmarkCount = 21;
inline constexpr std::size_t kCoordinateCount = kLandmarkCount * 3;

/// Reserved static label for "no relevant gesture".
inline constexpr std::string_view kNoneLabel = "none";

// Hand landmark indices. 0 is the wrist; each digit is a chain of four
// points from its base to its tip.
namespace landmark {
inline constexpr std::size_t kWrist = 0;
inline constexpr std::size_t kThumbCmc = 1;
inline constexpr std::size_t kThumbMcp = 2;
inline constexpr std::size_t kThumbIp = 3;
inline constexpr std::size_t kThumbTip = 4;
inline constexpr std::size_t kIndexMcp = 5;
inline constexpr std::size_t kIndexPip = 6;
inline constexpr std::size_t kIndexDip = 7;
inline constexpr std::size_t kIndexTip = 8;
inline constexpr std::size_t kMiddleMcp = 9;
inline constexpr std::size_t kMiddleTip = 12;
inline constexpr std::size_t kRingMcp = 13;
inline constexpr std::size_t kRingTip = 16;
inline constexpr std::size_t kPinkyMcp = 17;
inline constexpr std::size_t kPinkyTip = 20;
}  // namespace landmark

/// The 20 edges of the hand skeleton: wrist to each digit base, then the
/// three bones along each digit.
inline constexpr std::array<std::pair<std::size_t, std::size_t>, 20> kSkeletonEdges{{
    {0, 1}, {1, 2}, {2, 3}, {3, 4},
    {0, 5}, {5, 6}, {6, 7}, {7, 8},
    {0, 9}, {9, 10}, {10, 11}, {11, 12},
    {0, 13}, {13, 14}, {14, 15}, {15, 16},
    {0, 17}, {17, 18}, {18, 19}, {19, 20},
}};

enum class Handedness { Left, Right };

constexpr char to_char(Handedness h) { return h == Handedness::Left ? 'L' : 'R'; }

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Landmark&, const Landmark&) = default;
};

/// One hand observation. x and y are normalized image coordinates (nominally
/// in [0,1]); z is relative depth with no fixed scale. `signal` marks frames
/// inside an explicitly delimited dynamic gesture.
struct KeypointFrame {
  std::array<Landmark, kLandmarkCount> landmarks{};
  Handedness handedness = Handedness::Right;
  std::int64_t timestamp_ms = 0;
  bool signal = false;

  friend bool operator==(const KeypointFrame&, const KeypointFrame&) = default;
};

/// Unvalidated input, e.g. straight from a parser or a foreign producer.
struct RawFrame {
  std::vector<Landmark> landmarks;
  Handedness handedness = Handedness::Right;
  std::int64_t timestamp_ms = 0;
  bool signal = false;
};

inline KeypointFrame validate_frame(const KeypointFrame& frame) {
  if (frame.timestamp_ms < 0) {
    throw Error(ErrorCode::NegativeTimestamp, std::to_string(frame.timestamp_ms));
  }
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const auto& p = frame.landmarks[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw Error(ErrorCode::NonFiniteCoordinate, "landmark " + std::to_string(i));
    }
  }
  return frame;
}

/// Checks a candidate frame against every KeypointFrame invariant. Never
/// repairs data.
inline KeypointFrame validate_frame(const RawFrame& raw) {
  if (raw.landmarks.size() != kLandmarkCount) {
    throw Error(ErrorCode::WrongLandmarkCount,
                "expected 21, got " + std::to_string(raw.landmarks.size()));
  }
  KeypointFrame frame;
  std::copy(raw.landmarks.begin(), raw.landmarks.end(), frame.landmarks.begin());
  frame.handedness = raw.handedness;
  frame.timestamp_ms = raw.timestamp_ms;
  frame.signal = raw.signal;
  return validate_frame(frame);
}

/// True if any x or y lies outside [0,1]. Such frames are valid; callers may
/// want to warn.
inline bool outside_view(const KeypointFrame& frame) {
  for (const auto& p : frame.landmarks) {
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) return true;
  }
  return false;
}

inline KeypointFrame translated(KeypointFrame frame, double dx, double dy, double dz) {
  for (auto& p : frame.landmarks) {
    p.x += dx;
    p.y += dy;
    p.z += dz;
  }
  return frame;
}

/// Flattens landmarks as x0,y0,z0,...,x20,y20,z20.
inline std::array<double, kCoordinateCount> flatten(const KeypointFrame& frame) {
  std::array<double, kCoordinateCount> out{};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[3 * i] = frame.landmarks[i].x;
    out[3 * i + 1] = frame.landmarks[i].y;
    out[3 * i + 2] = frame.landmarks[i].z;
  }
  return out;
}

inline void unflatten(std::span<const double, kCoordinateCount> coords, KeypointFrame& frame) {
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    frame.landmarks[i] = {coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]};
  }
}

enum class GestureKind { Static, Dynamic };

constexpr std::string_view to_string(GestureKind kind) {
  return kind == GestureKind::Static ? "static" : "dynamic";
}

struct GestureLabel {
  std::string name;
  GestureKind kind = GestureKind::Static;

  friend bool operator==(const GestureLabel&, const GestureLabel&) = default;
};

struct CursorMove {
  int x_px = 0;
  int y_px = 0;

  friend bool operator==(const CursorMove&, const CursorMove&) = default;
};

struct GestureEvent {
  std::variant<GestureLabel, CursorMove> what;
  double confidence = 1.0;
  std::int64_t timestamp_ms = 0;
  int source_frame_count = 1;

  bool is_cursor() const { return std::holds_alternative<CursorMove>(what); }
  const GestureLabel* label() const { return std::get_if<GestureLabel>(&what); }
  const CursorMove* cursor() const { return std::get_if<CursorMove>(&what); }

  friend bool operator==(const GestureEvent&, const GestureEvent&) = default;
};

}  // namespace gestop
