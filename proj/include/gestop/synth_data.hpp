#pragma once

// Labelled synthetic datasets built from the pose library and trajectory
// templates. Used by `gestop synth`, the tests, and the acceptance run.

#include <cstdint>
#include <random>
#include <string>

#include "gestop/core.hpp"
#include "gestop/datasets.hpp"
#include "gestop/synth.hpp"

namespace gestop::synth {

inline constexpr double kDefaultStaticNoise = 0.01;
inline constexpr double kDefaultDynamicNoise = 0.004;

/// `per_class` samples of each library pose plus `per_class` clutter
/// samples labelled "none".
inline StaticDataset static_dataset(std::size_t per_class, double noise_sigma = kDefaultStaticNoise,
                                    std::uint64_t seed = 1) {
  StaticDataset data;
  data.reserve(per_class * (kPoseLibrary.size() + 1));
  std::uint64_t stream = 0;
  for (const auto& name : pose_names()) {
    const auto file = synth_static(name, per_class, noise_sigma, seed * 1000003 + stream++);
    const std::string label = name == kClutterPose ? std::string(kNoneLabel) : name;
    for (const auto& f : file.frames) data.push_back({f, label});
  }
  return data;
}

/// `per_class` sequences of each trajectory template, with lengths drawn
/// from [min_frames, max_frames] and a random starting offset.
inline DynamicDataset dynamic_dataset(std::size_t per_class, double noise_sigma = kDefaultDynamicNoise,
                                      std::uint64_t seed = 1, std::size_t min_frames = 20,
                                      std::size_t max_frames = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(min_frames, max_frames);
  std::uniform_real_distribution<double> offset(-0.1, 0.1);
  DynamicDataset data;
  data.reserve(per_class * kDynamicTemplates.size());
  for (const auto name : kDynamicTemplates) {
    for (std::size_t i = 0; i < per_class; ++i) {
      auto file = synth_dynamic(name, length(rng), noise_sigma, rng());
      const double dx = offset(rng), dy = offset(rng);
      for (auto& f : file.frames) f = translated(f, dx, dy, 0.0);
      data.push_back({std::move(file.frames), std::string(name)});
    }
  }
  return data;
}

}  // namespace gestop::synth
