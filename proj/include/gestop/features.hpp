#pragma once

// Network input features. The layout below is frozen: model files record
// kFeatureLayoutVersion and refuse to load against a different one.
//
// Relative vectors (48 values): 16 bones, each (end - start) as x,y,z, in order
//   thumb  0->1, 1->2, 2->3, 3->4
//   index  5->6, 6->7, 7->8
//   middle 9->10, 10->11, 11->12
//   ring   13->14, 14->15, 15->16
//   pinky  17->18, 18->19, 19->20
//
// Static feature (49): relative vectors, then handedness (Left 0.0, Right 1.0).
// Dynamic row (52): wrist x,y; wrist dx,dy vs previous frame (0,0 on the first
// row); relative vectors.

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gestop/core.hpp"
#include "gestop/error.hpp"

namespace gestop {

inline constexpr int kFeatureLayoutVersion = 1;

inline constexpr std::array<std::pair<std::size_t, std::size_t>, 16> kFeatureBones{{
    {0, 1}, {1, 2}, {2, 3}, {3, 4},
    {5, 6}, {6, 7}, {7, 8},
    {9, 10}, {10, 11}, {11, 12},
    {13, 14}, {14, 15}, {15, 16},
    {17, 18}, {18, 19}, {19, 20},
}};

inline constexpr std::size_t kRelativeVectorSize = kFeatureBones.size() * 3;
inline constexpr std::size_t kStaticFeatureSize = kRelativeVectorSize + 1;
inline constexpr std::size_t kDynamicFeatureSize = 2 + 2 + kRelativeVectorSize;

static_assert(kRelativeVectorSize == 48);
static_assert(kStaticFeatureSize == 49);
static_assert(kDynamicFeatureSize == 52);

using RelativeVectors = std::array<double, kRelativeVectorSize>;
using StaticFeature = std::array<double, kStaticFeatureSize>;
using DynamicRow = std::array<double, kDynamicFeatureSize>;
using DynamicFeatureSequence = std::vector<DynamicRow>;

inline constexpr double handedness_value(Handedness h) {
  return h == Handedness::Left ? 0.0 : 1.0;
}

inline RelativeVectors relative_vectors(const KeypointFrame& frame) {
  RelativeVectors out{};
  std::size_t k = 0;
  for (auto [from, to] : kFeatureBones) {
    const auto& a = frame.landmarks[from];
    const auto& b = frame.landmarks[to];
    out[k++] = b.x - a.x;
    out[k++] = b.y - a.y;
    out[k++] = b.z - a.z;
  }
  return out;
}

inline StaticFeature static_feature(const KeypointFrame& frame) {
  StaticFeature out{};
  const auto rel = relative_vectors(frame);
  std::copy(rel.begin(), rel.end(), out.begin());
  out[kRelativeVectorSize] = handedness_value(frame.handedness);
  return out;
}

inline DynamicFeatureSequence dynamic_features(std::span<const KeypointFrame> frames) {
  if (frames.empty()) throw Error(ErrorCode::EmptySequence, "dynamic_features");
  DynamicFeatureSequence rows;
  rows.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& wrist = frames[i].landmarks[landmark::kWrist];
    DynamicRow row{};
    row[0] = wrist.x;
    row[1] = wrist.y;
    if (i > 0) {
      const auto& prev = frames[i - 1].landmarks[landmark::kWrist];
      row[2] = wrist.x - prev.x;
      row[3] = wrist.y - prev.y;
    }
    const auto rel = relative_vectors(frames[i]);
    std::copy(rel.begin(), rel.end(), row.begin() + 4);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gestop
