#pragma once

// The long-running service: ingress -> recognizer -> executor, with the
// dashboard control plane on a second port.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gestop/control_plane.hpp"
#include "gestop/core.hpp"
#include "gestop/datasets.hpp"
#include "gestop/error.hpp"
#include "gestop/executor.hpp"
#include "gestop/ingress.hpp"
#include "gestop/model_io.hpp"
#include "gestop/neuralnet.hpp"
#include "gestop/recognizer.hpp"
#include "gestop/training.hpp"

namespace gestop {

namespace fs = std::filesystem;

/// $GESTOP_HOME, else ~/.gestop, else ./.gestop.
inline fs::path gestop_home() {
  if (const char* env = std::getenv("GESTOP_HOME"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".gestop";
  return ".gestop";
}

struct DaemonConfig {
  std::uint16_t ingress_port = kDefaultIngressPort;
  std::uint16_t control_port = kDefaultControlPort;
  std::string bind_address = "127.0.0.1";
  fs::path home = gestop_home();
  // Empty paths disable the model / keep the mapping in memory only.
  fs::path static_model;
  fs::path dynamic_model;
  fs::path mapping;
  fs::path dispatch_log;
  fs::path dashboard_dir;
  RecognizerConfig recognizer;
  double calibration_k = 2.0;
  nn::TrainConfig retrain;

  fs::path data_dir() const { return home / "data"; }
  fs::path static_data() const { return data_dir() / "static.csv"; }
  fs::path dynamic_data() const { return data_dir() / "dynamic"; }
  fs::path static_model_out() const { return static_model.empty() ? home / "static.model" : static_model; }
  fs::path dynamic_model_out() const { return dynamic_model.empty() ? home / "dynamic.model" : dynamic_model; }

  void validate() const {
    if (ingress_port != 0 && ingress_port == control_port) {
      throw Error(ErrorCode::InvalidArgument, "ingress and control ports must differ");
    }
    for (const auto& p : {static_model, dynamic_model, mapping}) {
      if (!p.empty() && !fs::exists(p)) throw Error(ErrorCode::IOFailure, p.string() + " does not exist");
    }
    if (!dashboard_dir.empty() && !fs::is_directory(dashboard_dir)) {
      throw Error(ErrorCode::IOFailure, dashboard_dir.string() + " is not a directory");
    }
    if (!(calibration_k >= 1.0)) throw Error(ErrorCode::InvalidArgument, "calibration k must be >= 1");
    recognizer.validate();
  }
};

namespace events {

inline std::string frame(const KeypointFrame& f) {
  nlohmann::json lm = nlohmann::json::array();
  for (const auto& p : f.landmarks) lm.push_back({p.x, p.y, p.z});
  return nlohmann::json{{"type", "frame"},
                        {"landmarks", std::move(lm)},
                        {"handedness", std::string(1, to_char(f.handedness))},
                        {"signal", f.signal},
                        {"ts", f.timestamp_ms}}
      .dump();
}

inline std::string gesture(const GestureEvent& e) {
  if (const auto* c = e.cursor()) return nlohmann::json{{"type", "cursor"}, {"x", c->x_px}, {"y", c->y_px}}.dump();
  const auto* l = e.label();
  return nlohmann::json{{"type", "gesture"},
                        {"name", l->name},
                        {"kind", std::string(to_string(l->kind))},
                        {"confidence", e.confidence},
                        {"ts", e.timestamp_ms}}
      .dump();
}

inline std::string training(std::string_view kind, const nn::EpochMetrics& m) {
  nlohmann::json j{{"type", "training"}, {"kind", kind}, {"epoch", m.epoch}, {"loss", m.loss}};
  j["val_acc"] = m.val_accuracy ? nlohmann::json(*m.val_accuracy) : nlohmann::json(nullptr);
  return j.dump();
}

}  // namespace events

class Daemon {
 public:
  Daemon(DaemonConfig cfg, ActionSink& sink)
      : cfg_(std::move(cfg)), sink_(sink), queue_(kIngressQueueCapacity), recognizer_(cfg_.recognizer) {
    cfg_.validate();
    if (!cfg_.static_model.empty()) {
      models_.static_model = std::make_shared<const nn::StaticNet>(nn::load_model_as<nn::StaticNet>(cfg_.static_model));
    }
    if (!cfg_.dynamic_model.empty()) {
      models_.dynamic_model =
          std::make_shared<const nn::DynamicNet>(nn::load_model_as<nn::DynamicNet>(cfg_.dynamic_model));
    }
    models_.calibration = calibration();
    auto mapping = cfg_.mapping.empty() ? default_mapping() : load_mapping(cfg_.mapping);
    if (!cfg_.dispatch_log.empty()) {
      if (cfg_.dispatch_log.has_parent_path()) fs::create_directories(cfg_.dispatch_log.parent_path());
      log_ = std::make_unique<DispatchLog>(cfg_.dispatch_log);
    }
    executor_ = std::make_unique<Executor>(std::move(mapping), sink_, log_.get());
  }

  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  ~Daemon() { stop(); }

  /// Binds both ports and starts the worker threads. Throws BindFailure.
  void start() {
    if (started_) return;
    started_ = true;
    control_ = std::make_unique<ControlServer>(
        cfg_.control_port, [this](const HttpRequest& r) { return handle(r); }, events_,
        [this] { return std::vector<std::string>{status_json().dump()}; }, cfg_.bind_address);
    ingress_ = std::make_unique<IngressServer>(cfg_.ingress_port, queue_, cfg_.bind_address);
    consumer_ = std::thread([this] { consume(); });
    spdlog::info("gestop: ingress on {}:{}, control on {}:{}", cfg_.bind_address, ingress_->port(),
                 cfg_.bind_address, control_->port());
  }

  /// Cooperative shutdown: stop accepting, drain queued frames, close any
  /// open segment, flush the dispatch log.
  void stop() {
    if (!started_ || stopped_.exchange(true)) return;
    if (ingress_) ingress_->stop();
    queue_.close();
    if (consumer_.joinable()) consumer_.join();
    {
      std::lock_guard lock(record_mu_);
      stop_recording_locked();
    }
    if (log_) log_->flush();
    if (control_) control_->stop();
    events_.close_all();
  }

  std::uint16_t ingress_port() const { return ingress_ ? ingress_->port() : 0; }
  std::uint16_t control_port() const { return control_ ? control_->port() : 0; }

  std::size_t frames_processed() const { return processed_.load(); }
  std::size_t malformed() const { return ingress_ ? ingress_->malformed() : 0; }
  EventBroadcast& events() { return events_; }
  Executor& executor() { return *executor_; }

  bool wait_for_frames(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(progress_mu_);
    return progress_cv_.wait_for(lock, timeout, [&] { return processed_.load() >= n; });
  }

  /// Per-frame time from decode to dispatch completion, in milliseconds.
  std::vector<double> frame_latencies_ms() const {
    std::lock_guard lock(stats_mu_);
    return frame_latency_;
  }

  /// The same, restricted to frames that emitted a static gesture.
  std::vector<double> static_event_latencies_ms() const {
    std::lock_guard lock(stats_mu_);
    return static_latency_;
  }

  void set_signal(bool on) { signal_override_ = on; }
  bool signal() const { return signal_override_.load(); }

  RecognizerModels models() const {
    std::lock_guard lock(models_mu_);
    return models_;
  }

  void swap_static_model(nn::StaticNet net) {
    auto p = std::make_shared<const nn::StaticNet>(std::move(net));
    std::lock_guard lock(models_mu_);
    models_.static_model = std::move(p);
    models_.calibration = nn::calibration_for(models_.static_model->labels, cfg_.calibration_k);
  }

  void swap_dynamic_model(nn::DynamicNet net) {
    auto p = std::make_shared<const nn::DynamicNet>(std::move(net));
    std::lock_guard lock(models_mu_);
    models_.dynamic_model = std::move(p);
  }

  /// Validates, swaps, and persists (if a mapping path is configured).
  void put_mapping(std::string_view text) {
    auto next = parse_mapping(text);
    if (!cfg_.mapping.empty()) save_mapping(next, cfg_.mapping);
    executor_->swap_mapping(std::move(next));
  }

  void start_recording(const std::string& kind, const std::string& label) {
    if (label.empty()) throw Error(ErrorCode::InvalidArgument, "label is required");
    std::lock_guard lock(record_mu_);
    stop_recording_locked();
    if (kind == "static") {
      recorder_ = std::make_unique<StaticRecorder>(cfg_.static_data(), label);
    } else if (kind == "dynamic") {
      recorder_ = std::make_unique<DynamicRecorder>(cfg_.dynamic_data(), label, cfg_.recognizer.min_segment_frames);
    } else {
      throw Error(ErrorCode::InvalidArgument, "kind must be static or dynamic");
    }
  }

  /// Returns samples stored by the recording that was active.
  std::size_t stop_recording() {
    std::lock_guard lock(record_mu_);
    return stop_recording_locked();
  }

  std::size_t retrain(const std::string& kind) {
    std::lock_guard lock(retrain_mu_);
    auto progress = [&](const nn::EpochMetrics& m) { events_.publish(events::training(kind, m)); };
    if (kind == "static") {
      const auto data = load_static_csv(cfg_.static_data());
      auto result = train_static(data, cfg_.retrain, kDefaultValFraction, cfg_.calibration_k, progress);
      nn::save_model(result.model, cfg_.static_model_out());
      swap_static_model(std::move(result.model));
      return data.size();
    }
    if (kind == "dynamic") {
      const auto data = load_dynamic_dir(cfg_.dynamic_data());
      auto result = train_dynamic(data, cfg_.retrain, kDefaultValFraction, progress);
      nn::save_model(result.model, cfg_.dynamic_model_out());
      swap_dynamic_model(std::move(result.model));
      return data.size();
    }
    throw Error(ErrorCode::InvalidArgument, "kind must be static or dynamic");
  }

  nlohmann::json labels_json() const {
    const auto m = models();
    nlohmann::json j{{"static", nlohmann::json::array()}, {"dynamic", nlohmann::json::array()}};
    if (m.static_model) j["static"] = m.static_model->labels;
    if (m.dynamic_model) j["dynamic"] = m.dynamic_model->labels;
    return j;
  }

  nlohmann::json status_json() const {
    nlohmann::json j{{"type", "status"},
                     {"frames", processed_.load()},
                     {"malformed", malformed()},
                     {"producer_connected", ingress_ && ingress_->connected()},
                     {"signal", signal_override_.load()},
                     {"subscribers", events_.subscriber_count()}};
    std::lock_guard lock(record_mu_);
    if (recording_locked()) {
      j["recording"] = std::visit(
          [](const auto& r) {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, std::monostate>) {
              return nlohmann::json(nullptr);
            } else if constexpr (std::is_same_v<R, std::unique_ptr<StaticRecorder>>) {
              return nlohmann::json{{"kind", "static"}, {"label", r->label()}, {"samples", r->count()}};
            } else {
              return nlohmann::json{{"kind", "dynamic"}, {"label", r->label()}, {"samples", r->stored()}};
            }
          },
          recorder_);
    } else {
      j["recording"] = nullptr;
    }
    return j;
  }

  HttpResponse handle(const HttpRequest& req) {
    const auto path = req.target.substr(0, req.target.find('?'));
    try {
      if (path == "/config") {
        if (req.method == "GET") return json_ok(to_json(*executor_->mapping()));
        if (req.method == "PUT") {
          put_mapping(req.body);
          return json_ok(to_json(*executor_->mapping()));
        }
      } else if (path == "/labels" && req.method == "GET") {
        return json_ok(labels_json());
      } else if (path == "/status" && req.method == "GET") {
        return json_ok(status_json());
      } else if (path == "/record/start" && req.method == "POST") {
        const auto body = parse_body(req.body);
        start_recording(body.value("kind", ""), body.value("label", ""));
        publish_status();
        return json_ok({{"recording", true}});
      } else if (path == "/record/stop" && req.method == "POST") {
        const auto n = stop_recording();
        publish_status();
        return json_ok({{"recording", false}, {"samples", n}});
      } else if (path == "/retrain" && req.method == "POST") {
        const auto body = parse_body(req.body);
        const auto kind = body.value("kind", "");
        const auto n = retrain(kind);
        return json_ok({{"kind", kind}, {"samples", n}, {"labels", labels_json()}});
      } else if (path == "/signal" && req.method == "POST") {
        set_signal(parse_switch(req.body));
        publish_status();
        return json_ok({{"signal", signal()}});
      } else if (req.method == "GET" && !cfg_.dashboard_dir.empty()) {
        return serve_file(path);
      }
      if (path == "/config" || path == "/labels" || path == "/status" || path.rfind("/record/", 0) == 0 ||
          path == "/retrain" || path == "/signal") {
        return error_response(405, "method_not_allowed", req.method + " " + path);
      }
      return error_response(404, "not_found", path);
    } catch (const Error& e) {
      const unsigned status = (e.code() == ErrorCode::IOFailure) ? 500 : 400;
      return error_response(status, std::string(to_string(e.code())), e.what());
    } catch (const nlohmann::json::exception& e) {
      return error_response(400, "ParseError", e.what());
    }
  }

 private:
  using RecorderSlot =
      std::variant<std::monostate, std::unique_ptr<StaticRecorder>, std::unique_ptr<DynamicRecorder>>;

  bool recording_locked() const { return recorder_.index() != 0; }

  nn::CalibrationConfig calibration() const {
    if (models_.static_model) return nn::calibration_for(models_.static_model->labels, cfg_.calibration_k);
    return nn::CalibrationConfig{};
  }

  void consume() {
    while (auto item = queue_.pop()) {
      try {
        process(*item);
      } catch (const std::exception& e) {
        spdlog::error("gestop: frame dropped: {}", e.what());
      }
      {
        std::lock_guard lock(progress_mu_);
        ++processed_;
      }
      progress_cv_.notify_all();
    }
    try {
      const auto m = models();
      for (const auto& ev : recognizer_.finish(m)) dispatch(ev);
    } catch (const std::exception& e) {
      spdlog::error("gestop: closing segment failed: {}", e.what());
    }
    progress_cv_.notify_all();
  }

  void process(IngressFrame& item) {
    auto& frame = item.frame;
    frame.signal = frame.signal || signal_override_.load();
    const bool watched = events_.subscriber_count() > 0;
    if (watched) events_.publish(events::frame(frame));
    {
      std::lock_guard lock(record_mu_);
      if (recording_locked()) feed_recorder(frame);
    }
    const auto m = models();
    const auto out = recognizer_.process(frame, m);
    bool static_event = false;
    for (const auto& ev : out) {
      dispatch(ev);
      if (const auto* l = ev.label(); l && l->kind == GestureKind::Static) static_event = true;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - item.received).count();
    std::lock_guard lock(stats_mu_);
    if (frame_latency_.size() < kMaxLatencySamples) frame_latency_.push_back(ms);
    if (static_event && static_latency_.size() < kMaxLatencySamples) static_latency_.push_back(ms);
  }

  void dispatch(const GestureEvent& ev) {
    executor_->execute(ev);
    if (events_.subscriber_count() > 0) events_.publish(events::gesture(ev));
  }

  void feed_recorder(const KeypointFrame& frame) {
    std::visit(
        [&](auto& r) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(r)>, std::monostate>) r->add(frame);
        },
        recorder_);
  }

  std::size_t stop_recording_locked() {
    if (!recording_locked()) return 0;
    std::size_t n = std::visit(
        [](auto& r) -> std::size_t {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, std::monostate>) {
            return 0;
          } else if constexpr (std::is_same_v<R, std::unique_ptr<StaticRecorder>>) {
            return r->count();
          } else {
            r->close();
            return r->stored();
          }
        },
        recorder_);
    recorder_ = {};
    return n;
  }

  void publish_status() { events_.publish(status_json().dump()); }

  static nlohmann::json parse_body(const std::string& body) {
    if (detail::trim(body).empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(detail::normalize_config_text(body));
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "request body must be a JSON object");
    return j;
  }

  // Accepts on/off, true/false, 1/0, bare or as a JSON string, or an object
  // with an "on" or "signal" member.
  static bool parse_switch(const std::string& body) {
    auto word = [](std::string s) -> std::optional<bool> {
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
      if (s == "on" || s == "true" || s == "1") return true;
      if (s == "off" || s == "false" || s == "0") return false;
      return std::nullopt;
    };
    const auto text = std::string(detail::trim(body));
    if (auto b = word(text)) return *b;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::ParseError, "signal body must be on or off");
    }
    auto from = [&](const nlohmann::json& v) -> std::optional<bool> {
      if (v.is_boolean()) return v.get<bool>();
      if (v.is_string()) return word(v.get<std::string>());
      if (v.is_number_integer()) return word(std::to_string(v.get<long>()));
      return std::nullopt;
    };
    std::optional<bool> r;
    if (j.is_object()) {
      for (const char* key : {"on", "signal", "state"}) {
        if (j.contains(key)) r = from(j[key]);
        if (r) break;
      }
    } else {
      r = from(j);
    }
    if (!r) throw Error(ErrorCode::ParseError, "signal body must be on or off");
    return *r;
  }

  HttpResponse serve_file(std::string path) const {
    if (path == "/") path = "/index.html";
    const fs::path rel = fs::path(path).relative_path();
    for (const auto& part : rel) {
      if (part == "..") return error_response(404, "not_found", path);
    }
    const auto file = cfg_.dashboard_dir / rel;
    std::ifstream in(file, std::ios::binary);
    if (!in || fs::is_directory(file)) return error_response(404, "not_found", path);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto ext = file.extension().string();
    std::string type = "application/octet-stream";
    if (ext == ".html") type = "text/html";
    else if (ext == ".js" || ext == ".mjs") type = "text/javascript";
    else if (ext == ".css") type = "text/css";
    else if (ext == ".json") type = "application/json";
    else if (ext == ".svg") type = "image/svg+xml";
    else if (ext == ".png") type = "image/png";
    return {200, buf.str(), type};
  }

  static HttpResponse json_ok(const nlohmann::json& j) { return {200, j.dump()}; }

  static HttpResponse error_response(unsigned status, const std::string& code, const std::string& message) {
    return {status, nlohmann::json{{"error", code}, {"message", message}}.dump()};
  }

  static constexpr std::size_t kMaxLatencySamples = 1 << 20;

  DaemonConfig cfg_;
  ActionSink& sink_;
  FrameQueue queue_;
  EventBroadcast events_;
  Recognizer recognizer_;  // consumer thread only
  std::unique_ptr<DispatchLog> log_;
  std::unique_ptr<Executor> executor_;

  mutable std::mutex models_mu_;
  RecognizerModels models_;

  mutable std::mutex record_mu_;
  RecorderSlot recorder_;
  std::mutex retrain_mu_;

  std::atomic<bool> signal_override_{false};
  std::atomic<std::size_t> processed_{0};
  std::mutex progress_mu_;
  std::condition_variable progress_cv_;
  mutable std::mutex stats_mu_;
  std::vector<double> frame_latency_;
  std::vector<double> static_latency_;

  bool started_ = false;
  std::atomic<bool> stopped_{false};
  std::unique_ptr<ControlServer> control_;
  std::unique_ptr<IngressServer> ingress_;
  std::thread consumer_;
};

}  // namespace gestop
