// gestop command line: serve, train-static, train-dynamic, eval, record,
// replay, synth.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gestop/daemon.hpp"
#include "gestop/datasets.hpp"
#include "gestop/ingress.hpp"
#include "gestop/model_io.hpp"
#include "gestop/synth.hpp"
#include "gestop/synth_data.hpp"
#include "gestop/training.hpp"
#include "gestop/wire.hpp"

namespace fs = std::filesystem;
using namespace gestop;

namespace {

struct Common {
  std::uint16_t ingress_port = kDefaultIngressPort;
  std::uint16_t control_port = kDefaultControlPort;
  std::string static_model;
  std::string dynamic_model;
  std::string mapping;
  std::uint64_t seed = 0;
  int epochs = 50;
  double val_fraction = kDefaultValFraction;
  std::string speed = "1";
  double calibration_k = 2.0;
};

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

// Existing file under GESTOP_HOME, if the flag was left empty.
std::string or_home(const std::string& given, const char* name) {
  if (!given.empty()) return given;
  const auto p = gestop_home() / name;
  return fs::exists(p) ? p.string() : std::string();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out << text;
}

int serve(const Common& c, const std::string& dispatch_log, const std::string& dashboard,
          const std::string& bind, bool no_shell) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);  // before any thread starts

  DaemonConfig cfg;
  cfg.ingress_port = c.ingress_port;
  cfg.control_port = c.control_port;
  cfg.bind_address = bind;
  cfg.static_model = or_home(c.static_model, "static.model");
  cfg.dynamic_model = or_home(c.dynamic_model, "dynamic.model");
  cfg.mapping = or_home(c.mapping, "mapping.json");
  cfg.dispatch_log = dispatch_log;
  cfg.dashboard_dir = dashboard;
  cfg.calibration_k = c.calibration_k;
  cfg.retrain.seed = c.seed;
  cfg.retrain.epochs = c.epochs;
  if (cfg.static_model.empty()) spdlog::warn("no static model: static gestures disabled");
  if (cfg.dynamic_model.empty()) spdlog::warn("no dynamic model: dynamic gestures disabled");

  LoggingSink sink(!no_shell, std::chrono::seconds(30), 1000);
  Daemon daemon(cfg, sink);
  daemon.start();
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}: shutting down", sig);
  daemon.stop();
  spdlog::info("processed {} frames", daemon.frames_processed());
  return 0;
}

void print_history_tail(const std::vector<nn::EpochMetrics>& history) {
  if (history.empty()) return;
  const auto& m = history.back();
  std::cout << "epochs " << m.epoch << ", final loss " << m.loss << ", train accuracy "
            << percent(m.train_accuracy) << '\n';
}

int train_static_cmd(const Common& c, const std::string& data_path, const std::string& out,
                     std::string metrics) {
  const auto data = load_static_csv(data_path);
  nn::TrainConfig cfg;
  cfg.seed = c.seed;
  cfg.epochs = c.epochs;
  auto r = train_static(data, cfg, c.val_fraction, c.calibration_k);
  nn::save_model(r.model, out);
  if (metrics.empty()) metrics = out + ".metrics.csv";
  write_metrics_csv(r.history, metrics);
  print_history_tail(r.history);
  std::cout << "validation accuracy " << percent(r.validation.accuracy()) << " (calibrated k="
            << c.calibration_k << ": " << percent(r.validation_calibrated.accuracy()) << ")\n";
  std::cout << "model " << out << ", metrics " << metrics << '\n';
  return 0;
}

int train_dynamic_cmd(const Common& c, const std::string& data_path, const std::string& out,
                      std::string metrics) {
  const auto data = load_dynamic(data_path);
  nn::TrainConfig cfg;
  cfg.seed = c.seed;
  cfg.epochs = c.epochs;
  auto r = train_dynamic(data, cfg, c.val_fraction);
  nn::save_model(r.model, out);
  if (metrics.empty()) metrics = out + ".metrics.csv";
  write_metrics_csv(r.history, metrics);
  print_history_tail(r.history);
  std::cout << "validation accuracy " << percent(r.validation.accuracy()) << '\n';
  std::cout << "model " << out << ", metrics " << metrics << '\n';
  return 0;
}

int eval_cmd(const Common& c, const std::string& model_path, const std::string& data_path,
             const std::string& confusion_out, bool all) {
  const auto model = nn::load_model(model_path);
  auto report = [&](const ConfusionMatrix& cm, const char* what) {
    std::cout << what << " accuracy " << percent(cm.accuracy()) << " on " << cm.total() << " samples\n";
  };
  ConfusionMatrix cm(std::vector<std::string>{});
  if (const auto* net = std::get_if<nn::StaticNet>(&model)) {
    auto data = load_static_csv(data_path);
    if (!all) data = split(data, c.val_fraction).second;
    cm = evaluate(*net, data);
    report(cm, "plain");
    report(evaluate(*net, data, nn::calibration_for(net->labels, c.calibration_k)), "calibrated");
  } else {
    auto data = load_dynamic(data_path);
    if (!all) data = split(data, c.val_fraction).second;
    cm = evaluate(std::get<nn::DynamicNet>(model), data);
    report(cm, "plain");
  }
  if (confusion_out.empty() || confusion_out == "-") {
    std::cout << cm.to_csv();
  } else {
    write_text(confusion_out, cm.to_csv());
    std::cout << "confusion matrix " << confusion_out << '\n';
  }
  return 0;
}

int record_cmd(const std::string& kind, const std::string& label, std::optional<std::uint16_t> port,
               const std::string& file, const std::string& out, std::size_t n, int min_segment) {
  std::optional<ReplayFile> replay_file;
  std::unique_ptr<FrameQueue> queue;
  std::unique_ptr<IngressServer> ingress;
  FrameSource source;
  if (port) {
    queue = std::make_unique<FrameQueue>(kIngressQueueCapacity);
    ingress = std::make_unique<IngressServer>(*port, *queue);
    spdlog::info("recording from port {}", ingress->port());
    // Ends when the producer disconnects and the queue is drained.
    source = [&]() -> std::optional<KeypointFrame> {
      for (;;) {
        if (auto item = queue->pop_for(std::chrono::milliseconds(50))) return item->frame;
        if (ingress->sessions_closed() > 0 && queue->size() == 0) return std::nullopt;
      }
    };
  } else {
    replay_file = read_replay(file);
    source = frames_from(replay_file->frames);
  }
  if (kind == "static") {
    const auto rows = record_static(out, label, source, n == 0 ? std::numeric_limits<std::size_t>::max() : n);
    std::cout << rows << " rows appended to " << out << '\n';
  } else {
    const auto stored = record_dynamic(out, label, source, min_segment);
    std::cout << stored << " sequences stored under " << (fs::path(out) / sanitize_for_path(label)).string()
              << '\n';
  }
  return 0;
}

int replay_cmd(const std::string& file, const std::string& host, std::uint16_t port, const std::string& speed) {
  const auto f = read_replay(file);
  const auto start = std::chrono::steady_clock::now();
  const auto n = send_frames(host, port, f.frames, ReplaySpeed::parse(speed));
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << n << " frames sent in " << s << " s\n";
  return 0;
}

int synth_cmd(const std::string& what, const std::string& name, const std::string& out, std::size_t count,
              double noise, std::uint64_t seed, std::size_t runs) {
  if (what == "static-dataset") {
    save_static_csv(synth::static_dataset(count, noise < 0 ? synth::kDefaultStaticNoise : noise, seed), out);
  } else if (what == "dynamic-dataset") {
    save_dynamic_dir(synth::dynamic_dataset(count, noise < 0 ? synth::kDefaultDynamicNoise : noise, seed), out);
  } else if (what == "pose") {
    write_replay(fs::path(out), synth::synth_static(name, count, noise < 0 ? synth::kDefaultStaticNoise : noise, seed));
  } else {
    // `runs` signal-marked performances separated by idle open-palm frames.
    ReplayFile file;
    file.header.label = name;
    file.header.fps = synth::kSynthFps;
    const auto idle = synth::frame_from_table(synth::kOpenPalmPose);
    for (std::size_t r = 0; r < runs; ++r) {
      for (int i = 0; i < 5; ++i) file.frames.push_back(idle);
      const auto run = synth::synth_dynamic(name, count, noise < 0 ? synth::kDefaultDynamicNoise : noise, seed + r);
      file.frames.insert(file.frames.end(), run.frames.begin(), run.frames.end());
    }
    for (int i = 0; i < 5; ++i) file.frames.push_back(idle);
    for (std::size_t i = 0; i < file.frames.size(); ++i) file.frames[i].timestamp_ms = synth::synth_timestamp(i);
    write_replay(fs::path(out), file);
  }
  std::cout << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gestop: hand-gesture recognition daemon and toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  Common c;
  auto add_ports = [&](CLI::App* s) {
    s->add_option("--ingress-port", c.ingress_port, "frame ingress port")->capture_default_str();
    s->add_option("--control-port", c.control_port, "dashboard control port")->capture_default_str();
  };
  auto add_training = [&](CLI::App* s) {
    s->add_option("--seed", c.seed, "initialization and shuffle seed")->capture_default_str();
    s->add_option("--epochs", c.epochs, "training epochs")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--val-fraction", c.val_fraction, "validation fraction")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    s->add_option("--calibration-k", c.calibration_k, "none-class boost")->capture_default_str();
  };

  auto* serve_cmd = app.add_subcommand("serve", "run the daemon");
  add_ports(serve_cmd);
  add_training(serve_cmd);
  std::string dispatch_log, dashboard, bind = "127.0.0.1";
  bool no_shell = false;
  serve_cmd->add_option("--static-model", c.static_model, "static model (default $GESTOP_HOME/static.model)");
  serve_cmd->add_option("--dynamic-model", c.dynamic_model, "dynamic model (default $GESTOP_HOME/dynamic.model)");
  serve_cmd->add_option("--mapping", c.mapping, "action mapping (default $GESTOP_HOME/mapping.json)");
  serve_cmd->add_option("--dispatch-log", dispatch_log, "JSON-lines dispatch log");
  serve_cmd->add_option("--dashboard", dashboard, "directory of dashboard files to serve");
  serve_cmd->add_option("--bind", bind, "listen address")->capture_default_str();
  serve_cmd->add_flag("--no-shell", no_shell, "log shell actions without running them");

  std::string data_path, out_path, metrics_path;
  auto* ts = app.add_subcommand("train-static", "train the static model from a CSV dataset");
  ts->add_option("data", data_path, "static CSV")->required();
  ts->add_option("-o,--out,--static-model", out_path, "output model")->required();
  ts->add_option("--metrics", metrics_path, "metrics CSV (default <out>.metrics.csv)");
  add_training(ts);

  auto* td = app.add_subcommand("train-dynamic", "train the dynamic model from replays or SHREC");
  td->add_option("data", data_path, "directory of .replay files or a SHREC root")->required();
  td->add_option("-o,--out,--dynamic-model", out_path, "output model")->required();
  td->add_option("--metrics", metrics_path, "metrics CSV (default <out>.metrics.csv)");
  add_training(td);

  std::string model_path, confusion_out;
  bool eval_all = false;
  auto* ev = app.add_subcommand("eval", "evaluate a model; prints accuracy and confusion matrix");
  ev->add_option("model", model_path, "model file")->required();
  ev->add_option("data", data_path, "dataset (static CSV, replay directory or SHREC root)")->required();
  ev->add_option("--confusion", confusion_out, "confusion CSV path (default stdout)");
  ev->add_flag("--all", eval_all, "evaluate every sample instead of the validation split");
  ev->add_option("--val-fraction", c.val_fraction, "validation fraction")->capture_default_str();
  ev->add_option("--calibration-k", c.calibration_k, "none-class boost")->capture_default_str();

  std::string kind, label, file;
  std::uint16_t record_port = 0;
  std::size_t count = 0;
  int min_segment = RecognizerConfig{}.min_segment_frames;
  auto* rec = app.add_subcommand("record", "record samples from a port or replay file");
  rec->add_option("kind", kind, "static|dynamic")->required()->check(CLI::IsMember({"static", "dynamic"}));
  rec->add_option("label", label, "gesture label")->required();
  auto* port_opt = rec->add_option("--port", record_port, "listen for a producer on this port");
  auto* file_opt = rec->add_option("--file", file, "read frames from a replay file");
  port_opt->excludes(file_opt);
  rec->add_option("-o,--out", out_path, "static CSV or dynamic dataset directory")->required();
  rec->add_option("-n,--count", count, "static: stop after n rows (0 = all)");
  rec->add_option("--min-segment", min_segment, "dynamic: shortest stored run")->capture_default_str();

  std::string host = "127.0.0.1";
  auto* rp = app.add_subcommand("replay", "send a replay file to a running daemon");
  rp->add_option("file", file, "replay file")->required()->check(CLI::ExistingFile);
  rp->add_option("--host", host)->capture_default_str();
  rp->add_option("--port,--ingress-port", c.ingress_port, "daemon ingress port")->capture_default_str();
  rp->add_option("--speed", c.speed, "'max' or a multiple of recorded time")->capture_default_str();

  std::string what, name;
  double noise = -1.0;
  std::size_t runs = 10;
  std::uint64_t synth_seed = 1;
  auto* sy = app.add_subcommand("synth", "generate synthetic data");
  sy->add_option("what", what, "static-dataset|dynamic-dataset|pose|gesture")
      ->required()
      ->check(CLI::IsMember({"static-dataset", "dynamic-dataset", "pose", "gesture"}));
  sy->add_option("name", name, "pose or template name (pose, gesture)");
  sy->add_option("-o,--out", out_path, "output path")->required();
  sy->add_option("-n,--count", count, "samples per class, frames per pose file or frames per run");
  sy->add_option("--noise", noise, "coordinate noise sigma");
  sy->add_option("--seed", synth_seed)->capture_default_str();
  sy->add_option("--runs", runs, "gesture: number of signal-marked runs")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*serve_cmd) return serve(c, dispatch_log, dashboard, bind, no_shell);
    if (*ts) return train_static_cmd(c, data_path, out_path, metrics_path);
    if (*td) return train_dynamic_cmd(c, data_path, out_path, metrics_path);
    if (*ev) return eval_cmd(c, model_path, data_path, confusion_out, eval_all);
    if (*rec) {
      if (!*port_opt && !*file_opt) throw Error(ErrorCode::InvalidArgument, "record needs --port or --file");
      return record_cmd(kind, label, *port_opt ? std::optional(record_port) : std::nullopt, file, out_path, count,
                        min_segment);
    }
    if (*rp) return replay_cmd(file, host, c.ingress_port, c.speed);
    if (*sy) {
      if ((what == "pose" || what == "gesture") && name.empty()) {
        throw Error(ErrorCode::InvalidArgument, what + " needs a name");
      }
      if (count == 0) count = what == "static-dataset" ? 2000 : what == "dynamic-dataset" ? 60 : what == "pose" ? 100 : 30;
      return synth_cmd(what, name, out_path, count, noise, synth_seed, runs);
    }
  } catch (const Error& e) {
    std::cerr << "gestop: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "gestop: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
