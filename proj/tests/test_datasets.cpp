#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gestop/datasets.hpp"
#include "gestop/synth.hpp"
#include "test_util.hpp"

using namespace gestop;
using gestop::test_util::error_code;
namespace fs = std::filesystem;

namespace {

std::vector<KeypointFrame> signal_pattern(const std::vector<std::pair<bool, int>>& runs) {
  std::vector<KeypointFrame> out;
  std::int64_t ts = 0;
  for (auto [on, n] : runs) {
    for (int i = 0; i < n; ++i) {
      auto f = synth::frame_from_table(synth::kOpenPalmPose);
      f.signal = on;
      f.timestamp_ms = ts;
      ts += 33;
      out.push_back(f);
    }
  }
  return out;
}

void write_skeleton(const fs::path& path, int frames, int values_per_line = 66) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  for (int f = 0; f < frames; ++f) {
    for (int v = 0; v < values_per_line; ++v) out << (v ? " " : "") << 0.01 * (v + f);
    out << '\n';
  }
}

}  // namespace

TEST(StaticCsv, RoundTripAndColumnOrder) {
  std::mt19937_64 rng(1);
  StaticDataset data;
  for (int i = 0; i < 20; ++i) data.push_back({gestop::test_util::random_frame(rng), i % 2 ? "Seven" : "a, b"});
  for (auto& s : data) {
    s.frame.timestamp_ms = 0;
    s.frame.signal = false;
  }
  const auto dir = gestop::test_util::temp_dir("csv");
  save_static_csv(data, dir / "s.csv");
  const auto back = load_static_csv(dir / "s.csv");
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].frame, data[i].frame);
    EXPECT_EQ(back[i].label, data[i].label);
  }
  KeypointFrame f;
  f.landmarks[0] = {0.5, 0.25, -1.0};
  f.handedness = Handedness::Left;
  const auto row = encode_static_row(f, "X");
  EXPECT_EQ(row.rfind("0.5,0.25,-1,0,0,0,", 0), 0u);
  EXPECT_EQ(row.substr(row.size() - 5), ",L,X\n");
}

TEST(StaticCsv, ParseErrorsCarryLine) {
  const auto good = encode_static_row(KeypointFrame{}, "ok");
  auto expect_line = [](const std::string& text, std::size_t line) {
    std::istringstream in(text);
    try {
      parse_static_csv(in);
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ParseError);
      EXPECT_EQ(e.line(), line);
    }
  };
  expect_line(good + "1,2,3\n", 2);
  expect_line(good + good + std::string(good).replace(0, 1, "q"), 3);
  auto bad_hand = good;
  bad_hand.replace(bad_hand.find(",R,"), 3, ",Q,");
  expect_line(bad_hand, 1);
  auto no_label = good.substr(0, good.size() - 3) + "\n";
  expect_line(no_label, 1);
  auto inf = good;
  inf.replace(0, 1, "inf");
  expect_line(inf, 1);
}

TEST(RecordStatic, AppendsInOrder) {
  const auto dir = gestop::test_util::temp_dir("record_static");
  const auto file = synth::synth_static("peace", 2000, 0.01, 1);
  EXPECT_EQ(record_static(dir / "s.csv", "Seven", frames_from(file.frames), 2000), 2000u);
  EXPECT_EQ(load_static_csv(dir / "s.csv").size(), 2000u);

  const auto a = synth::synth_static("fist", 10, 0.01, 2);
  const auto b = synth::synth_static("point", 10, 0.01, 3);
  record_static(dir / "t.csv", "first", frames_from(a.frames), 10);
  record_static(dir / "t.csv", "second", frames_from(b.frames), 10);
  const auto rows = load_static_csv(dir / "t.csv");
  ASSERT_EQ(rows.size(), 20u);
  EXPECT_EQ(rows[0].label, "first");
  EXPECT_EQ(rows[19].label, "second");
  EXPECT_EQ(rows[10].frame.landmarks, b.frames[0].landmarks);
  EXPECT_EQ(error_code([&] { record_static(dir / "u.csv", "x", frames_from(a.frames), 0); }),
            ErrorCode::InvalidArgument);
}

TEST(RecordDynamic, OneSequencePerLongRun) {
  const auto dir = gestop::test_util::temp_dir("record_dynamic");
  const auto frames = signal_pattern({{false, 5}, {true, 12}, {false, 3}, {true, 4}, {false, 2}, {true, 20}, {false, 1}, {true, 15}});
  EXPECT_EQ(record_dynamic(dir, "Circle", frames_from(frames), 10), 3u);
  const auto data = load_dynamic_dir(dir);
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0].frames.size(), 12u);
  EXPECT_EQ(data[1].frames.size(), 20u);
  EXPECT_EQ(data[2].frames.size(), 15u);
  for (const auto& s : data) EXPECT_EQ(s.label, "Circle");
  // A second session continues the numbering.
  EXPECT_EQ(record_dynamic(dir, "Circle", frames_from(frames), 10), 3u);
  EXPECT_EQ(load_dynamic_dir(dir).size(), 6u);
}

TEST(DynamicDir, SaveLoadRoundTrip) {
  const auto dir = gestop::test_util::temp_dir("dynamic_dir");
  DynamicDataset data{{signal_pattern({{true, 4}}), "swipe up"}, {signal_pattern({{true, 7}}), "tap"},
                      {signal_pattern({{true, 2}}), "swipe up"}};
  save_dynamic_dir(data, dir);
  const auto back = load_dynamic(dir);
  ASSERT_EQ(back.size(), 3u);
  std::multiset<std::pair<std::string, std::size_t>> want, got;
  for (const auto& s : data) want.insert({s.label, s.frames.size()});
  for (const auto& s : back) got.insert({s.label, s.frames.size()});
  EXPECT_EQ(want, got);
}

TEST(Shrec, SkeletonMapping) {
  std::ostringstream line;
  for (int v = 0; v < 66; ++v) line << (v ? " " : "") << v;
  std::istringstream in(line.str() + "\n");
  const auto frames = parse_shrec_skeleton(in, "x");
  ASSERT_EQ(frames.size(), 1u);
  // Wrist stays, the palm centre (joint 1) is skipped, then joints 2..21 in order.
  EXPECT_EQ(frames[0].landmarks[0], (Landmark{0, 1, 2}));
  EXPECT_EQ(frames[0].landmarks[1], (Landmark{6, 7, 8}));
  EXPECT_EQ(frames[0].landmarks[20], (Landmark{63, 64, 65}));
  EXPECT_TRUE(frames[0].signal);
  EXPECT_EQ(frames[0].handedness, Handedness::Right);
}

TEST(Shrec, FixtureTree) {
  const auto root = gestop::test_util::temp_dir("shrec");
  std::ofstream(root / "train_gestures.txt") << "1 1 1 1 1 1 7\n9 2 3 1 9 18 5\n";
  std::ofstream(root / "test_gestures.txt") << "2 1 1 2 2 3 9\n";
  write_skeleton(root / "gesture_1/finger_1/subject_1/essai_1/skeletons_world.txt", 7);
  write_skeleton(root / "gesture_9/finger_2/subject_3/essai_1/skeletons_world.txt", 5);
  write_skeleton(root / "gesture_2/finger_1/subject_1/essai_2/skeletons_world.txt", 9);
  ASSERT_TRUE(looks_like_shrec(root));
  const auto data = load_dynamic(root);
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0].label, "Grab");
  EXPECT_EQ(data[0].frames.size(), 7u);
  EXPECT_EQ(data[1].label, "Swipe Up");
  EXPECT_EQ(data[2].label, "Tap");
  EXPECT_EQ(data[2].frames[8].timestamp_ms, 8 * kShrecFrameIntervalMs);
}

TEST(Shrec, SixtyFiveFloatsIsMalformed) {
  const auto root = gestop::test_util::temp_dir("shrec_bad");
  std::ofstream(root / "train_gestures.txt") << "1 1 1 1 1 1 3\n";
  std::ofstream(root / "test_gestures.txt") << "";
  const auto skel = root / "gesture_1/finger_1/subject_1/essai_1/skeletons_world.txt";
  write_skeleton(skel, 2);
  {
    std::ofstream out(skel, std::ios::app);
    for (int v = 0; v < 65; ++v) out << (v ? " " : "") << v;
    out << '\n';
  }
  try {
    parse_shrec(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedSkeletonLine);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("skeletons_world.txt"), std::string::npos);
  }
}

TEST(Shrec, MissingIndexFile) {
  const auto root = gestop::test_util::temp_dir("shrec_noindex");
  std::ofstream(root / "train_gestures.txt") << "";
  EXPECT_EQ(error_code([&] { parse_shrec(root); }), ErrorCode::MissingIndexFile);
}

TEST(Split, EightyTwentyPerClass) {
  std::vector<std::string> labels;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 100; ++i) labels.push_back("c" + std::to_string(c));
  }
  std::shuffle(labels.begin(), labels.end(), std::mt19937_64(3));
  const auto s = stratified_split(labels, 0.2, 42);
  std::map<std::string, int> val_counts, train_counts;
  for (auto i : s.val) ++val_counts[labels[i]];
  for (auto i : s.train) ++train_counts[labels[i]];
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(val_counts["c" + std::to_string(c)], 20);
    EXPECT_EQ(train_counts["c" + std::to_string(c)], 80);
  }
  const auto again = stratified_split(labels, 0.2, 42);
  EXPECT_EQ(again.val, s.val);
  EXPECT_EQ(again.train, s.train);
}

TEST(Split, PropertyIsAPartition) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> classes(2, 6), per(2, 40);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> labels;
    const int c = classes(rng);
    for (int k = 0; k < c; ++k) {
      const int n = per(rng);
      for (int i = 0; i < n; ++i) labels.push_back(std::to_string(k));
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto s = stratified_split(labels, frac(rng), rng());
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.val.begin(), s.val.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
    std::set<std::string> in_val, in_train;
    for (auto i : s.val) in_val.insert(labels[i]);
    for (auto i : s.train) in_train.insert(labels[i]);
    ASSERT_EQ(static_cast<int>(in_val.size()), c);
    ASSERT_EQ(static_cast<int>(in_train.size()), c);
  }
}

TEST(Split, Errors) {
  EXPECT_EQ(error_code([] { stratified_split({"a", "a", "b"}, 0.2); }), ErrorCode::ClassTooSmall);
  EXPECT_EQ(error_code([] { stratified_split({"a", "a"}, 0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code([] { stratified_split({"a", "a"}, 1.0); }), ErrorCode::InvalidArgument);
}

TEST(Labels, NoneFirst) {
  StaticDataset data{{{}, "zeta"}, {{}, "alpha"}, {{}, "none"}};
  EXPECT_EQ(class_labels(data, true), (std::vector<std::string>{"none", "alpha", "zeta"}));
  StaticDataset without{{{}, "b"}, {{}, "a"}};
  EXPECT_EQ(class_labels(without, true), (std::vector<std::string>{"none", "a", "b"}));
  EXPECT_EQ(error_code([] { label_indices({"x"}, {"none", "a"}); }), ErrorCode::UnknownLabel);
}

TEST(Confusion, HandCountedExample) {
  const auto cm = confusion_from({"a", "b"}, {0, 0, 1}, {0, 1, 1});
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 0u);
  EXPECT_EQ(cm.accuracy(), 2.0 / 3.0);
  EXPECT_EQ(cm.total(), 3u);
  EXPECT_EQ(cm.row_sum(0), 2u);
  EXPECT_EQ(*cm.class_accuracy(0), 0.5);
  EXPECT_EQ(cm.to_csv(), "true\\predicted,a,b\na,1,1\nb,0,1\n");
}

TEST(Confusion, PerfectPredictorIsDiagonal) {
  std::vector<std::size_t> truth{0, 1, 2, 2, 1, 0, 0};
  const auto cm = confusion_from({"x", "y", "z"}, truth, truth);
  EXPECT_EQ(cm.accuracy(), 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) {
        EXPECT_EQ(cm.at(i, j), 0u);
      }
    }
  }
  EXPECT_FALSE(confusion_from({"x", "y"}, {0}, {0}).class_accuracy(1));
}

TEST(Evaluate, UnknownLabelRejected) {
  const auto net = nn::make_static_net({"none", "a"}, 1, 4);
  StaticDataset data{{{}, "b"}};
  EXPECT_EQ(error_code([&] { evaluate(net, data); }), ErrorCode::UnknownLabel);
}

TEST(Evaluate, Deterministic) {
  const auto net = nn::make_static_net({"none", "fist", "point"}, 3);
  StaticDataset data;
  for (const auto* pose : {"fist", "point"}) {
    for (const auto& f : synth::synth_static(pose, 20, 0.02, 5).frames) data.push_back({f, pose});
  }
  const auto a = evaluate(net, data);
  const auto b = evaluate(net, data);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.total(), 40u);
  EXPECT_EQ(a.accuracy(), static_cast<double>(a.trace()) / 40.0);
}
