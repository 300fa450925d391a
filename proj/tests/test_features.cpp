#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "gestop/features.hpp"
#include "test_util.hpp"

using namespace gestop;

namespace {

template <class A>
bool bit_equal(const A& a, const A& b) {
  return std::memcmp(a.data(), b.data(), sizeof(typename A::value_type) * a.size()) == 0;
}

// Coordinates on a 2^-20 grid: sums with grid offsets of similar magnitude are
// exact in double precision, so translation invariance can be checked bit
// for bit.
KeypointFrame grid_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cell(0, 1 << 20);
  KeypointFrame f;
  for (auto& p : f.landmarks) {
    p = {std::ldexp(cell(rng), -20), std::ldexp(cell(rng), -20), std::ldexp(cell(rng) - (1 << 19), -20)};
  }
  f.handedness = cell(rng) % 2 ? Handedness::Left : Handedness::Right;
  return f;
}

}  // namespace

TEST(RelativeVectors, OriginFrameGivesZeros) {
  KeypointFrame f;
  const auto v = relative_vectors(f);
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(RelativeVectors, FirstBoneIsWristToThumbBase) {
  KeypointFrame f;
  f.landmarks[1] = {0.1, 0.2, 0.3};
  const auto v = relative_vectors(f);
  EXPECT_EQ(v[0], 0.1);
  EXPECT_EQ(v[1], 0.2);
  EXPECT_EQ(v[2], 0.3);
}

TEST(RelativeVectors, FrozenBoneOrder) {
  const std::array<std::pair<std::size_t, std::size_t>, 16> expected{{
      {0, 1}, {1, 2}, {2, 3}, {3, 4},
      {5, 6}, {6, 7}, {7, 8},
      {9, 10}, {10, 11}, {11, 12},
      {13, 14}, {14, 15}, {15, 16},
      {17, 18}, {18, 19}, {19, 20},
  }};
  EXPECT_EQ(kFeatureBones, expected);
  // Each landmark gets a distinct x so every bone's x component identifies it.
  KeypointFrame f;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) f.landmarks[i].x = static_cast<double>(i * i);
  const auto v = relative_vectors(f);
  for (std::size_t b = 0; b < 16; ++b) {
    const auto [from, to] = expected[b];
    EXPECT_EQ(v[3 * b], static_cast<double>(to * to) - static_cast<double>(from * from)) << b;
  }
}

TEST(RelativeVectors, TranslationByExampleOffset) {
  std::mt19937_64 rng(1);
  const auto f = grid_frame(rng);
  EXPECT_TRUE(bit_equal(relative_vectors(f), relative_vectors(translated(f, 0.5, 0.3125, 0.125))));
}

TEST(StaticFeature, LengthAndHandedness) {
  KeypointFrame f;
  f.landmarks[4] = {0.3, 0.2, 0.1};
  f.handedness = Handedness::Right;
  const auto right = static_feature(f);
  EXPECT_EQ(right.size(), 49u);
  EXPECT_EQ(right[48], 1.0);
  f.handedness = Handedness::Left;
  const auto left = static_feature(f);
  EXPECT_EQ(left[48], 0.0);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(left[i], right[i]);
}

TEST(StaticFeature, TranslationInvariantOnGridFrames) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> cell(-(1 << 19), 1 << 19);
  for (int i = 0; i < 1000; ++i) {
    const auto f = grid_frame(rng);
    const auto g = translated(f, std::ldexp(cell(rng), -20), std::ldexp(cell(rng), -20), std::ldexp(cell(rng), -20));
    ASSERT_TRUE(bit_equal(static_feature(f), static_feature(g))) << i;
  }
}

TEST(StaticFeature, TranslationInvariantToRoundingOnArbitraryFrames) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> off(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const auto f = test_util::random_frame(rng);
    const auto a = static_feature(f);
    const auto b = static_feature(translated(f, off(rng), off(rng), off(rng)));
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(StaticFeature, Pure) {
  std::mt19937_64 rng(4);
  const auto f = test_util::random_frame(rng);
  EXPECT_TRUE(bit_equal(static_feature(f), static_feature(f)));
}

TEST(DynamicFeatures, SingleFrame) {
  KeypointFrame f;
  f.landmarks[0] = {0.4, 0.6, 0.2};
  const auto rows = dynamic_features(std::span<const KeypointFrame>(&f, 1));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].size(), 52u);
  EXPECT_EQ(rows[0][0], 0.4);
  EXPECT_EQ(rows[0][1], 0.6);
  EXPECT_EQ(rows[0][2], 0.0);
  EXPECT_EQ(rows[0][3], 0.0);
}

TEST(DynamicFeatures, TimediffAndColumnCount) {
  KeypointFrame a;
  a.landmarks[0] = {0.25, 0.5, 0.0};
  KeypointFrame b = a;
  b.landmarks[0].x = 0.375;
  const std::vector<KeypointFrame> frames{a, b};
  const auto rows = dynamic_features(frames);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][2], 0.125);
  EXPECT_EQ(rows[1][3], 0.0);
  // 2 absolute + 2 timediff + 48 relative-vector columns.
  EXPECT_EQ(rows[1].size(), 2u + 2u + relative_vectors(a).size());
  const auto rel = relative_vectors(b);
  for (std::size_t k = 0; k < 48; ++k) EXPECT_EQ(rows[1][4 + k], rel[k]);
}

TEST(DynamicFeatures, EmptySequenceThrows) {
  try {
    dynamic_features(std::span<const KeypointFrame>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySequence);
  }
}

TEST(DynamicFeatures, TranslationCovariance) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cell(-(1 << 18), 1 << 18);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<KeypointFrame> seq, moved;
    const double dx = std::ldexp(cell(rng), -20), dy = std::ldexp(cell(rng), -20), dz = std::ldexp(cell(rng), -20);
    for (int i = 0; i < 8; ++i) {
      seq.push_back(grid_frame(rng));
      moved.push_back(translated(seq.back(), dx, dy, dz));
    }
    const auto a = dynamic_features(seq);
    const auto b = dynamic_features(moved);
    for (std::size_t t = 0; t < a.size(); ++t) {
      EXPECT_EQ(b[t][0], a[t][0] + dx);
      EXPECT_EQ(b[t][1], a[t][1] + dy);
      for (std::size_t k = 2; k < 52; ++k) ASSERT_EQ(b[t][k], a[t][k]) << t << "," << k;
    }
  }
}
