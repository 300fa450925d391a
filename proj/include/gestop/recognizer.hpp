#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "gestop/core.hpp"
#include "gestop/error.hpp"
#include "gestop/features.hpp"
#include "gestop/neuralnet.hpp"

namespace gestop {

struct RecognizerConfig {
  int stability_frames = 5;     // consecutive identical static predictions per event
  int min_segment_frames = 10;  // shorter signal runs are discarded
  double ema_alpha = 0.5;       // cursor smoothing, 1 = no smoothing
  int screen_width = 1920;
  int screen_height = 1080;

  void validate() const {
    if (stability_frames < 1) throw Error(ErrorCode::InvalidArgument, "stability_frames must be >= 1");
    if (min_segment_frames < 1) throw Error(ErrorCode::InvalidArgument, "min_segment_frames must be >= 1");
    if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "ema_alpha must be in (0,1]");
    }
    if (screen_width < 1 || screen_height < 1) throw Error(ErrorCode::InvalidArgument, "screen size");
  }
};

/// Models used by one call to Recognizer::process. Either model may be
/// absent, which disables its path.
struct RecognizerModels {
  std::shared_ptr<const nn::StaticNet> static_model;
  std::shared_ptr<const nn::DynamicNet> dynamic_model;
  nn::CalibrationConfig calibration;
};

struct StaticStreak {
  std::string label;
  int count = 0;
};

/// Per-stream recognition state: static debounce, signal-delimited dynamic
/// segmentation, and the smoothed index-fingertip cursor.
class Recognizer {
 public:
  explicit Recognizer(RecognizerConfig config = {}) : config_(config) { config_.validate(); }

  const RecognizerConfig& config() const { return config_; }

  /// Events for one frame, in order: the cursor move, then a dynamic event if
  /// this frame closes a segment, then a static event if the debounce fires.
  std::vector<GestureEvent> process(const KeypointFrame& frame, const RecognizerModels& models) {
    std::vector<GestureEvent> events;
    events.push_back(mouse_track(frame));

    if (frame.signal) {
      buffer_.push_back(frame);
      streak_ = {};
      return events;
    }
    if (!buffer_.empty()) close_segment(frame.timestamp_ms, models, events);
    run_static(frame, models, events);
    return events;
  }

  /// Closes a segment left open at end of stream.
  std::vector<GestureEvent> finish(const RecognizerModels& models) {
    std::vector<GestureEvent> events;
    if (!buffer_.empty()) close_segment(buffer_.back().timestamp_ms, models, events);
    return events;
  }

  /// Projects landmark 8 (index fingertip) onto the screen with EMA smoothing.
  GestureEvent mouse_track(const KeypointFrame& frame) {
    const auto& tip = frame.landmarks[landmark::kIndexTip];
    const double tx = std::clamp(tip.x, 0.0, 1.0) * config_.screen_width;
    const double ty = std::clamp(tip.y, 0.0, 1.0) * config_.screen_height;
    if (!cursor_) {
      cursor_ = {tx, ty};
    } else {
      const double a = config_.ema_alpha;
      cursor_->x = a * tx + (1.0 - a) * cursor_->x;
      cursor_->y = a * ty + (1.0 - a) * cursor_->y;
    }
    GestureEvent ev;
    ev.what = CursorMove{static_cast<int>(std::lround(cursor_->x)),
                         static_cast<int>(std::lround(cursor_->y))};
    ev.timestamp_ms = frame.timestamp_ms;
    return ev;
  }

  /// Seeds the cursor smoothing history, in pixels.
  void set_cursor(double x_px, double y_px) { cursor_ = Point{x_px, y_px}; }

  bool segment_open() const { return !buffer_.empty(); }
  std::size_t buffered_frames() const { return buffer_.size(); }
  const StaticStreak& streak() const { return streak_; }
  std::size_t discarded_segments() const { return discarded_; }

 private:
  struct Point {
    double x;
    double y;
  };

  void close_segment(std::int64_t ts, const RecognizerModels& models, std::vector<GestureEvent>& events) {
    std::vector<KeypointFrame> segment;
    segment.swap(buffer_);
    const auto length = static_cast<int>(segment.size());
    if (length < config_.min_segment_frames) {
      ++discarded_;
      spdlog::info("discarding {}-frame signal segment (minimum {})", length, config_.min_segment_frames);
      return;
    }
    if (!models.dynamic_model) {
      ++discarded_;
      spdlog::warn("no dynamic model loaded, dropping {}-frame segment", length);
      return;
    }
    const auto& net = *models.dynamic_model;
    const auto logits = nn::forward_dynamic(net, dynamic_features(segment));
    const auto probs = nn::softmax(logits);
    const auto best = nn::argmax(probs);
    GestureEvent ev;
    ev.what = GestureLabel{net.labels.at(best), GestureKind::Dynamic};
    ev.confidence = probs[best];
    ev.timestamp_ms = ts;
    ev.source_frame_count = length;
    events.push_back(std::move(ev));
  }

  void run_static(const KeypointFrame& frame, const RecognizerModels& models,
                  std::vector<GestureEvent>& events) {
    if (!models.static_model) return;
    const auto& net = *models.static_model;
    const auto logits = nn::forward_static(net, static_feature(frame));
    const auto pred = nn::calibrated_softmax(logits, models.calibration);
    const std::string& label = net.labels.at(pred.index);
    if (label == streak_.label && streak_.count > 0) {
      if (streak_.count < std::numeric_limits<int>::max()) ++streak_.count;
    } else {
      streak_ = {label, 1};
    }
    if (streak_.count == config_.stability_frames && label != kNoneLabel) {
      GestureEvent ev;
      ev.what = GestureLabel{label, GestureKind::Static};
      ev.confidence = pred.confidence();
      ev.timestamp_ms = frame.timestamp_ms;
      events.push_back(std::move(ev));
    }
  }

  RecognizerConfig config_;
  std::vector<KeypointFrame> buffer_;
  StaticStreak streak_;
  std::optional<Point> cursor_;
  std::size_t discarded_ = 0;
};

}  // namespace gestop
