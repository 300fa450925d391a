#pragma once

// Dataset files, splitting and evaluation.
//
// Static CSV, one row per sample, no header:
//   x0,y0,z0,...,x20,y20,z20,<L|R>,<label>
// Dynamic datasets are directory trees of replay files, one sequence per
// file, labelled through the header's label= field.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "gestop/core.hpp"
#include "gestop/error.hpp"
#include "gestop/features.hpp"
#include "gestop/neuralnet.hpp"
#include "gestop/wire.hpp"

namespace gestop {

/// Pulls the next frame, or nothing once the source is exhausted.
using FrameSource = std::function<std::optional<KeypointFrame>()>;

inline FrameSource frames_from(const std::vector<KeypointFrame>& frames) {
  return [&frames, i = std::size_t{0}]() mutable -> std::optional<KeypointFrame> {
    if (i >= frames.size()) return std::nullopt;
    return frames[i++];
  };
}

// ------------------------------------------------------------------ static

struct StaticSample {
  KeypointFrame frame;
  std::string label;
};

using StaticDataset = std::vector<StaticSample>;

inline std::string encode_static_row(const KeypointFrame& frame, std::string_view label) {
  std::string out;
  for (double c : flatten(frame)) {
    detail::append_double(out, c);
    out += ',';
  }
  out += to_char(frame.handedness);
  out += ',';
  out += label;
  out += '\n';
  return out;
}

inline StaticDataset parse_static_csv(std::istream& in) {
  StaticDataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim_eol(line);
    if (view.empty()) continue;
    // The label is everything after the 64th comma, so labels may contain commas.
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t k = 0; k < kCoordinateCount + 1; ++k) {
      auto pos = view.find(',', start);
      if (pos == std::string_view::npos) {
        throw Error(ErrorCode::ParseError, "expected 65 fields", line_no);
      }
      fields.push_back(view.substr(start, pos - start));
      start = pos + 1;
    }
    const auto label = view.substr(start);
    if (label.empty()) throw Error(ErrorCode::ParseError, "empty label", line_no);
    RawFrame raw;
    raw.landmarks.resize(kLandmarkCount);
    for (std::size_t i = 0; i < kCoordinateCount; ++i) {
      auto v = detail::parse_double(fields[i]);
      if (!v) throw Error(ErrorCode::ParseError, "bad coordinate " + std::to_string(i), line_no);
      auto& p = raw.landmarks[i / 3];
      (i % 3 == 0 ? p.x : i % 3 == 1 ? p.y : p.z) = *v;
    }
    const auto hand = fields[kCoordinateCount];
    if (hand != "L" && hand != "R") throw Error(ErrorCode::ParseError, "bad handedness", line_no);
    raw.handedness = hand == "L" ? Handedness::Left : Handedness::Right;
    try {
      data.push_back({validate_frame(raw), std::string(label)});
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, e.what(), line_no);
    }
  }
  return data;
}

inline StaticDataset load_static_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  return parse_static_csv(in);
}

inline void save_static_csv(const StaticDataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  for (const auto& s : data) out << encode_static_row(s.frame, s.label);
  if (!out) throw Error(ErrorCode::IOFailure, "write failed " + path.string());
}

/// Appends rows to a static dataset file. Serialized per instance.
class StaticRecorder {
 public:
  StaticRecorder(const std::filesystem::path& path, std::string label) : label_(std::move(label)) {
    if (label_.empty()) throw Error(ErrorCode::InvalidArgument, "empty label");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw Error(ErrorCode::IOFailure, "cannot append to " + path.string());
  }

  void add(const KeypointFrame& frame) {
    std::lock_guard lock(mu_);
    out_ << encode_static_row(frame, label_);
    if (!out_) throw Error(ErrorCode::IOFailure, "write failed");
    ++count_;
  }

  std::size_t count() const {
    std::lock_guard lock(mu_);
    return count_;
  }

  const std::string& label() const { return label_; }

 private:
  std::string label_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

/// Appends up to `n` frames from `source` labelled `label`. Returns the
/// number of rows written (fewer than n only if the source runs dry).
inline std::size_t record_static(const std::filesystem::path& path, const std::string& label,
                                 const FrameSource& source, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  StaticRecorder rec(path, label);
  while (rec.count() < n) {
    auto frame = source();
    if (!frame) break;
    rec.add(*frame);
  }
  return rec.count();
}

// ----------------------------------------------------------------- dynamic

struct DynamicSample {
  std::vector<KeypointFrame> frames;
  std::string label;
};

using DynamicDataset = std::vector<DynamicSample>;

/// Loads every *.replay file under `root`, in sorted path order. The label
/// comes from the header, falling back to the parent directory name.
inline DynamicDataset load_dynamic_dir(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw Error(ErrorCode::IOFailure, root.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".replay") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  DynamicDataset data;
  for (const auto& f : files) {
    ReplayFile file;
    try {
      file = read_replay(f);
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what(), e.line());
    }
    if (file.frames.empty()) {
      spdlog::warn("skipping empty sequence {}", f.string());
      continue;
    }
    auto label = file.header.label ? *file.header.label : f.parent_path().filename().string();
    data.push_back({std::move(file.frames), std::move(label)});
  }
  return data;
}

inline std::string sanitize_for_path(std::string_view label) {
  std::string out;
  for (char c : label) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  return out.empty() ? std::string("_") : out;
}

/// Turns maximal signal-on runs into stored sequences under
/// `root/<label>/`. Numbering continues after existing files.
class DynamicRecorder {
 public:
  DynamicRecorder(std::filesystem::path root, std::string label, int min_segment_frames)
      : dir_(std::move(root) / sanitize_for_path(label)),
        label_(std::move(label)),
        min_frames_(min_segment_frames) {
    if (label_.empty()) throw Error(ErrorCode::InvalidArgument, "empty label");
    std::filesystem::create_directories(dir_);
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (e.path().extension() == ".replay") ++next_index_;
    }
  }

  /// Returns the path written if this frame closed a stored sequence.
  std::optional<std::filesystem::path> add(const KeypointFrame& frame) {
    if (frame.signal) {
      run_.push_back(frame);
      return std::nullopt;
    }
    return close();
  }

  std::optional<std::filesystem::path> close() {
    if (run_.empty()) return std::nullopt;
    std::vector<KeypointFrame> run;
    run.swap(run_);
    if (static_cast<int>(run.size()) < min_frames_) {
      spdlog::warn("skipping {}-frame run for '{}' (minimum {})", run.size(), label_, min_frames_);
      ++skipped_;
      return std::nullopt;
    }
    ReplayFile file;
    file.header.label = label_;
    file.frames = std::move(run);
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.replay", next_index_++);
    auto path = dir_ / name;
    write_replay(path, file);
    ++stored_;
    return path;
  }

  std::size_t stored() const { return stored_; }
  std::size_t skipped() const { return skipped_; }
  const std::string& label() const { return label_; }

 private:
  std::filesystem::path dir_;
  std::string label_;
  int min_frames_;
  std::vector<KeypointFrame> run_;
  std::size_t next_index_ = 0;
  std::size_t stored_ = 0;
  std::size_t skipped_ = 0;
};

inline std::size_t record_dynamic(const std::filesystem::path& root, const std::string& label,
                                  const FrameSource& source, int min_segment_frames) {
  DynamicRecorder rec(root, label, min_segment_frames);
  while (auto frame = source()) rec.add(*frame);
  rec.close();
  return rec.stored();
}

/// Writes each sample to root/<label>/NNNNN.replay, continuing the
/// numbering of files already there.
inline void save_dynamic_dir(const DynamicDataset& data, const std::filesystem::path& root) {
  std::map<std::string, std::unique_ptr<DynamicRecorder>> recorders;
  for (const auto& s : data) {
    auto& rec = recorders[s.label];
    if (!rec) rec = std::make_unique<DynamicRecorder>(root, s.label, 1);
    for (auto f : s.frames) {
      f.signal = true;
      rec->add(f);
    }
    rec->close();
  }
}

// ------------------------------------------------------------------- SHREC

// SHREC'17 gesture classes, indexed by the dataset's 14-class label (1-based).
inline constexpr std::array<std::string_view, 14> kShrecGestures{
    "Grab",         "Tap",         "Expand",   "Pinch",   "Rotation CW", "Rotation CCW", "Swipe Right",
    "Swipe Left",   "Swipe Up",    "Swipe Down", "Swipe X", "Swipe +",    "Swipe V",      "Shake",
};

// SHREC joints: 0 wrist, 1 palm centre, then base..tip for thumb, index,
// middle, ring, pinky (2-5, 6-9, 10-13, 14-17, 18-21). Landmark i takes
// SHREC joint kShrecJointForLandmark[i]; the palm centre is dropped.
inline constexpr std::array<std::size_t, kLandmarkCount> kShrecJointForLandmark{
    0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21};

inline constexpr std::size_t kShrecJointCount = 22;
inline constexpr std::int64_t kShrecFrameIntervalMs = 33;

inline std::vector<KeypointFrame> parse_shrec_skeleton(std::istream& in, const std::string& name) {
  std::vector<KeypointFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      auto v = detail::parse_double(token);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedSkeletonLine, name + ": bad number '" + token + "'", line_no);
      }
      values.push_back(*v);
    }
    if (values.empty()) continue;
    if (values.size() != kShrecJointCount * 3) {
      throw Error(ErrorCode::MalformedSkeletonLine,
                  name + ": expected 66 values, got " + std::to_string(values.size()), line_no);
    }
    KeypointFrame frame;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      const std::size_t j = kShrecJointForLandmark[i];
      frame.landmarks[i] = {values[3 * j], values[3 * j + 1], values[3 * j + 2]};
    }
    frame.handedness = Handedness::Right;
    frame.signal = true;
    frame.timestamp_ms = static_cast<std::int64_t>(frames.size()) * kShrecFrameIntervalMs;
    frames.push_back(frame);
  }
  return frames;
}

struct ShrecEntry {
  int gesture = 0;
  int finger = 0;
  int subject = 0;
  int essai = 0;
  int label14 = 0;
};

/// Reads a SHREC'17 distribution: train_gestures.txt and test_gestures.txt
/// list sequences as "gesture finger subject essai label14 label28 size";
/// skeletons live in gesture_G/finger_F/subject_S/essai_E/skeletons_world.txt.
inline DynamicDataset parse_shrec(const std::filesystem::path& root) {
  std::vector<ShrecEntry> entries;
  for (const char* index_name : {"train_gestures.txt", "test_gestures.txt"}) {
    const auto index_path = root / index_name;
    std::ifstream in(index_path);
    if (!in) throw Error(ErrorCode::MissingIndexFile, index_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      std::istringstream fields(line);
      ShrecEntry e;
      int label28 = 0;
      if (!(fields >> e.gesture >> e.finger >> e.subject >> e.essai >> e.label14 >> label28) ||
          e.label14 < 1 || e.label14 > static_cast<int>(kShrecGestures.size())) {
        throw Error(ErrorCode::ParseError, index_path.string() + ": bad index entry", line_no);
      }
      entries.push_back(e);
    }
  }
  DynamicDataset data;
  data.reserve(entries.size());
  for (const auto& e : entries) {
    const auto path = root / ("gesture_" + std::to_string(e.gesture)) /
                      ("finger_" + std::to_string(e.finger)) /
                      ("subject_" + std::to_string(e.subject)) /
                      ("essai_" + std::to_string(e.essai)) / "skeletons_world.txt";
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IOFailure, "missing skeleton file " + path.string());
    auto frames = parse_shrec_skeleton(in, path.string());
    if (frames.empty()) throw Error(ErrorCode::MalformedSkeletonLine, path.string() + ": no frames");
    data.push_back({std::move(frames), std::string(kShrecGestures[static_cast<std::size_t>(e.label14 - 1)])});
  }
  return data;
}

inline bool looks_like_shrec(const std::filesystem::path& root) {
  return std::filesystem::exists(root / "train_gestures.txt") ||
         std::filesystem::exists(root / "test_gestures.txt");
}

/// A SHREC root or a directory of replay files.
inline DynamicDataset load_dynamic(const std::filesystem::path& root) {
  return looks_like_shrec(root) ? parse_shrec(root) : load_dynamic_dir(root);
}

// -------------------------------------------------------------- splitting

inline constexpr double kDefaultValFraction = 0.2;
inline constexpr std::uint64_t kSplitSeed = 42;

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Stratified split over sample labels. Each class with n samples sends
/// round(n * fraction), clamped to [1, n-1], to validation. Index lists are
/// sorted ascending.
inline Split stratified_split(const std::vector<std::string>& labels, double val_fraction,
                              std::uint64_t seed = kSplitSeed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "val_fraction must be in (0,1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) throw Error(ErrorCode::ClassTooSmall, "'" + label + "' has fewer than 2 samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

template <class Sample>
std::vector<std::string> labels_of(const std::vector<Sample>& data) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.label);
  return out;
}

template <class Sample>
std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& data,
                                                          double val_fraction,
                                                          std::uint64_t seed = kSplitSeed) {
  const auto s = stratified_split(labels_of(data), val_fraction, seed);
  std::vector<Sample> train, val;
  for (auto i : s.train) train.push_back(data[i]);
  for (auto i : s.val) val.push_back(data[i]);
  return {std::move(train), std::move(val)};
}

/// Sorted distinct labels. For static data "none" is always present and
/// always first.
template <class Sample>
std::vector<std::string> class_labels(const std::vector<Sample>& data, bool with_none) {
  std::set<std::string> names;
  for (const auto& s : data) names.insert(s.label);
  std::vector<std::string> out;
  if (with_none) {
    out.emplace_back(kNoneLabel);
    names.erase(std::string(kNoneLabel));
  }
  out.insert(out.end(), names.begin(), names.end());
  return out;
}

inline std::vector<std::size_t> label_indices(const std::vector<std::string>& sample_labels,
                                              const std::vector<std::string>& classes) {
  std::vector<std::size_t> out;
  out.reserve(sample_labels.size());
  for (const auto& l : sample_labels) {
    auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) throw Error(ErrorCode::UnknownLabel, "'" + l + "' is not a model class");
    out.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  return out;
}

inline std::vector<nn::Vector> static_inputs(const StaticDataset& data) {
  std::vector<nn::Vector> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(nn::to_vector(static_feature(s.frame)));
  return out;
}

inline std::vector<nn::Matrix> dynamic_inputs(const DynamicDataset& data) {
  std::vector<nn::Matrix> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(nn::to_matrix(dynamic_features(s.frames)));
  return out;
}

// ------------------------------------------------------------- evaluation

/// Rows are true labels, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels)
      : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

  void add(std::size_t truth, std::size_t predicted) {
    counts_.at(truth * labels_.size() + predicted) += 1;
    ++total_;
  }

  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_.at(truth * labels_.size() + predicted);
  }

  std::size_t row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < labels_.size(); ++j) s += at(truth, j);
    return s;
  }

  std::size_t trace() const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < labels_.size(); ++i) s += at(i, i);
    return s;
  }

  std::size_t total() const { return total_; }
  double accuracy() const {
    return total_ == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(total_);
  }

  /// Per-class recall; nullopt for classes without samples.
  std::optional<double> class_accuracy(std::size_t truth) const {
    const auto n = row_sum(truth);
    if (n == 0) return std::nullopt;
    return static_cast<double>(at(truth, truth)) / static_cast<double>(n);
  }

  const std::vector<std::string>& labels() const { return labels_; }

  /// Header row and column carry label names.
  std::string to_csv() const {
    auto quote = [](const std::string& s) {
      if (s.find_first_of(",\"") == std::string::npos) return s;
      std::string out = "\"";
      for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
      return out + "\"";
    };
    std::string out = "true\\predicted";
    for (const auto& l : labels_) out += "," + quote(l);
    out += '\n';
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      out += quote(labels_[i]);
      for (std::size_t j = 0; j < labels_.size(); ++j) out += "," + std::to_string(at(i, j));
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Builds the matrix from parallel label-index lists.
inline ConfusionMatrix confusion_from(const std::vector<std::string>& classes,
                                      const std::vector<std::size_t>& truth,
                                      const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::DimensionMismatch, "truth/prediction count");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

inline ConfusionMatrix evaluate(const nn::StaticNet& model, const StaticDataset& data,
                                const std::optional<nn::CalibrationConfig>& cal = std::nullopt) {
  const auto truth = label_indices(labels_of(data), model.labels);
  std::vector<std::size_t> predicted;
  predicted.reserve(data.size());
  for (const auto& s : data) {
    const auto logits = nn::forward_static(model, static_feature(s.frame));
    predicted.push_back(cal ? nn::calibrated_softmax(logits, *cal).index : nn::argmax(logits));
  }
  return confusion_from(model.labels, truth, predicted);
}

inline ConfusionMatrix evaluate(const nn::DynamicNet& model, const DynamicDataset& data) {
  const auto truth = label_indices(labels_of(data), model.labels);
  std::vector<std::size_t> predicted;
  predicted.reserve(data.size());
  for (const auto& s : data) {
    predicted.push_back(nn::argmax(nn::forward_dynamic(model, dynamic_features(s.frames))));
  }
  return confusion_from(model.labels, truth, predicted);
}

}  // namespace gestop
