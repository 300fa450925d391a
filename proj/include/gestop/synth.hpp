#pragma once

// Seeded synthetic keypoint data. Stands in for camera captures so datasets
// and tests are reproducible.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gestop/core.hpp"
#include "gestop/error.hpp"
#include "gestop/wire.hpp"

namespace gestop::synth {

using PoseTable = std::array<std::array<double, 3>, kLandmarkCount>;

inline constexpr int kSynthFps = 30;

// Canonical right-hand poses in normalized image coordinates, wrist near the
// bottom centre of the view. Rows are landmarks 0..20.

// open_palm: all five digits extended and spread.
inline constexpr PoseTable kOpenPalmPose{{
    {0.5000, 0.8000, 0.0000},
    {0.4400, 0.7600, -0.0100},
    {0.3900, 0.7100, -0.0200},
    {0.3500, 0.6700, -0.0250},
    {0.3200, 0.6400, -0.0300},
    {0.4400, 0.5800, -0.0100},
    {0.4329, 0.5204, -0.0100},
    {0.4287, 0.4857, -0.0100},
    {0.4251, 0.4559, -0.0100},
    {0.4900, 0.5600, -0.0100},
    {0.4900, 0.4950, -0.0100},
    {0.4900, 0.4550, -0.0100},
    {0.4900, 0.4230, -0.0100},
    {0.5400, 0.5800, -0.0100},
    {0.5471, 0.5204, -0.0100},
    {0.5516, 0.4837, -0.0100},
    {0.5551, 0.4539, -0.0100},
    {0.5850, 0.6200, 0.0000},
    {0.5959, 0.5763, 0.0000},
    {0.6032, 0.5472, 0.0000},
    {0.6093, 0.5230, 0.0000},
}};

// fist: all fingers curled toward the palm, thumb folded across them.
inline constexpr PoseTable kFistPose{{
    {0.5000, 0.8000, 0.0000},
    {0.4400, 0.7600, -0.0100},
    {0.4500, 0.7000, -0.0350},
    {0.4800, 0.6700, -0.0450},
    {0.5100, 0.6600, -0.0450},
    {0.4400, 0.5800, -0.0100},
    {0.4400, 0.5950, -0.0600},
    {0.4400, 0.6300, -0.0650},
    {0.4400, 0.6550, -0.0450},
    {0.4900, 0.5600, -0.0100},
    {0.4900, 0.5763, -0.0642},
    {0.4900, 0.6163, -0.0699},
    {0.4900, 0.6429, -0.0485},
    {0.5400, 0.5800, -0.0100},
    {0.5400, 0.5950, -0.0600},
    {0.5400, 0.6320, -0.0653},
    {0.5400, 0.6570, -0.0453},
    {0.5850, 0.6200, 0.0000},
    {0.5850, 0.6312, -0.0375},
    {0.5850, 0.6613, -0.0418},
    {0.5850, 0.6821, -0.0251},
}};

// point: index extended, other fingers curled, thumb folded.
inline constexpr PoseTable kPointPose{{
    {0.5000, 0.8000, 0.0000},
    {0.4400, 0.7600, -0.0100},
    {0.4500, 0.7000, -0.0350},
    {0.4800, 0.6700, -0.0450},
    {0.5100, 0.6600, -0.0450},
    {0.4400, 0.5800, -0.0100},
    {0.4400, 0.5200, -0.0100},
    {0.4400, 0.4850, -0.0100},
    {0.4400, 0.4550, -0.0100},
    {0.4900, 0.5600, -0.0100},
    {0.4900, 0.5763, -0.0642},
    {0.4900, 0.6163, -0.0699},
    {0.4900, 0.6429, -0.0485},
    {0.5400, 0.5800, -0.0100},
    {0.5400, 0.5950, -0.0600},
    {0.5400, 0.6320, -0.0653},
    {0.5400, 0.6570, -0.0453},
    {0.5850, 0.6200, 0.0000},
    {0.5850, 0.6312, -0.0375},
    {0.5850, 0.6613, -0.0418},
    {0.5850, 0.6821, -0.0251},
}};

// peace: index and middle extended in a V, ring and pinky curled, thumb folded.
inline constexpr PoseTable kPeacePose{{
    {0.5000, 0.8000, 0.0000},
    {0.4400, 0.7600, -0.0100},
    {0.4500, 0.7000, -0.0350},
    {0.4800, 0.6700, -0.0450},
    {0.5100, 0.6600, -0.0450},
    {0.4400, 0.5800, -0.0100},
    {0.4254, 0.5218, -0.0100},
    {0.4170, 0.4878, -0.0100},
    {0.4097, 0.4587, -0.0100},
    {0.4900, 0.5600, -0.0100},
    {0.4996, 0.4957, -0.0100},
    {0.5056, 0.4562, -0.0100},
    {0.5103, 0.4245, -0.0100},
    {0.5400, 0.5800, -0.0100},
    {0.5400, 0.5950, -0.0600},
    {0.5400, 0.6320, -0.0653},
    {0.5400, 0.6570, -0.0453},
    {0.5850, 0.6200, 0.0000},
    {0.5850, 0.6312, -0.0375},
    {0.5850, 0.6613, -0.0418},
    {0.5850, 0.6821, -0.0251},
}};

// hitchhike: thumb extended upward, all fingers curled.
inline constexpr PoseTable kHitchhikePose{{
    {0.5000, 0.8000, 0.0000},
    {0.4400, 0.7600, -0.0100},
    {0.4200, 0.7000, -0.0200},
    {0.4100, 0.6400, -0.0250},
    {0.4050, 0.5900, -0.0300},
    {0.4400, 0.5800, -0.0100},
    {0.4400, 0.5950, -0.0600},
    {0.4400, 0.6300, -0.0650},
    {0.4400, 0.6550, -0.0450},
    {0.4900, 0.5600, -0.0100},
    {0.4900, 0.5763, -0.0642},
    {0.4900, 0.6163, -0.0699},
    {0.4900, 0.6429, -0.0485},
    {0.5400, 0.5800, -0.0100},
    {0.5400, 0.5950, -0.0600},
    {0.5400, 0.6320, -0.0653},
    {0.5400, 0.6570, -0.0453},
    {0.5850, 0.6200, 0.0000},
    {0.5850, 0.6312, -0.0375},
    {0.5850, 0.6613, -0.0418},
    {0.5850, 0.6821, -0.0251},
}};
struct NamedPose {
  std::string_view name;
  const PoseTable* table;
};

inline constexpr std::array<NamedPose, 5> kPoseLibrary{{
    {"open_palm", &kOpenPalmPose},
    {"fist", &kFistPose},
    {"point", &kPointPose},
    {"peace", &kPeacePose},
    {"hitchhike", &kHitchhikePose},
}};

/// Name of the generator producing random non-gesture poses.
inline constexpr std::string_view kClutterPose = "clutter";

inline constexpr std::array<std::string_view, 5> kDynamicTemplates{
    "swipe_up", "swipe_down", "swipe_left", "swipe_right", "circle"};

inline std::vector<std::string> pose_names() {
  std::vector<std::string> out;
  for (const auto& p : kPoseLibrary) out.emplace_back(p.name);
  out.emplace_back(kClutterPose);
  return out;
}

inline const PoseTable* find_pose(std::string_view name) {
  for (const auto& p : kPoseLibrary) {
    if (p.name == name) return p.table;
  }
  return nullptr;
}

inline KeypointFrame frame_from_table(const PoseTable& table) {
  KeypointFrame frame;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    frame.landmarks[i] = {table[i][0], table[i][1], table[i][2]};
  }
  return frame;
}

inline std::int64_t synth_timestamp(std::size_t index) {
  return static_cast<std::int64_t>(index) * 1000 / kSynthFps;
}

namespace detail {

inline void add_noise(KeypointFrame& frame, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& p : frame.landmarks) {
    p.x += noise(rng);
    p.y += noise(rng);
    p.z += noise(rng);
  }
}

// Blends each digit independently between curled (fist) and extended
// (open palm), then shifts and rescales the whole hand.
inline KeypointFrame clutter_frame(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-0.15, 0.15);
  std::uniform_real_distribution<double> scale(0.8, 1.2);
  KeypointFrame frame = frame_from_table(kFistPose);
  for (std::size_t digit = 0; digit < 5; ++digit) {
    const double t = unit(rng);
    for (std::size_t j = 1; j <= 4; ++j) {
      const std::size_t i = 4 * digit + j;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1.0 - t) * kFistPose[i][c] + t * kOpenPalmPose[i][c];
        (c == 0 ? frame.landmarks[i].x : c == 1 ? frame.landmarks[i].y : frame.landmarks[i].z) = v;
      }
    }
  }
  const double s = scale(rng), dx = shift(rng), dy = shift(rng);
  const auto wrist = frame.landmarks[0];
  for (auto& p : frame.landmarks) {
    p.x = wrist.x + s * (p.x - wrist.x) + dx;
    p.y = wrist.y + s * (p.y - wrist.y) + dy;
    p.z = s * p.z;
  }
  return frame;
}

// Wrist offset from its canonical position at progress u in [0,1].
inline std::array<double, 2> trajectory(std::string_view name, double u) {
  constexpr double kSwipe = 0.15;
  constexpr double kRadius = 0.12;
  if (name == "swipe_right") return {-kSwipe + 2 * kSwipe * u, 0.0};
  if (name == "swipe_left") return {kSwipe - 2 * kSwipe * u, 0.0};
  // Image y grows downward, so "up" means decreasing y.
  if (name == "swipe_up") return {0.0, kSwipe - 2 * kSwipe * u};
  if (name == "swipe_down") return {0.0, -kSwipe + 2 * kSwipe * u};
  if (name == "circle") {
    const double theta = 2.0 * std::numbers::pi * u;
    return {kRadius * std::cos(theta) - kRadius, kRadius * std::sin(theta)};
  }
  throw Error(ErrorCode::UnknownTemplate, std::string(name));
}

}  // namespace detail

/// `n` frames of a named pose (or random clutter) with per-coordinate
/// Gaussian noise. Pure function of its arguments.
inline ReplayFile synth_static(std::string_view pose, std::size_t n, double noise_sigma,
                               std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sigma < 0");
  const PoseTable* table = find_pose(pose);
  const bool clutter = pose == kClutterPose;
  if (!table && !clutter) throw Error(ErrorCode::UnknownPose, std::string(pose));

  std::mt19937_64 rng(seed);
  ReplayFile file;
  file.header.label = std::string(pose);
  file.header.fps = kSynthFps;
  file.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    KeypointFrame frame = clutter ? detail::clutter_frame(rng) : frame_from_table(*table);
    detail::add_noise(frame, noise_sigma, rng);
    frame.timestamp_ms = synth_timestamp(i);
    file.frames.push_back(frame);
  }
  return file;
}

/// An open palm moved along a named trajectory over `frames` frames. Every
/// frame carries the signal flag.
inline ReplayFile synth_dynamic(std::string_view name, std::size_t frames, double noise_sigma,
                                std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sigma < 0");
  detail::trajectory(name, 0.0);  // validates the name

  std::mt19937_64 rng(seed);
  ReplayFile file;
  file.header.label = std::string(name);
  file.header.fps = kSynthFps;
  file.frames.reserve(frames);
  const KeypointFrame base = frame_from_table(kOpenPalmPose);
  for (std::size_t i = 0; i < frames; ++i) {
    const double u = frames > 1 ? static_cast<double>(i) / static_cast<double>(frames - 1) : 0.0;
    const auto [dx, dy] = detail::trajectory(name, u);
    KeypointFrame frame = translated(base, dx, dy, 0.0);
    detail::add_noise(frame, noise_sigma, rng);
    frame.timestamp_ms = synth_timestamp(i);
    frame.signal = true;
    file.frames.push_back(frame);
  }
  return file;
}

}  // namespace gestop::synth
