#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "gestop/daemon.hpp"
#include "gestop/synth.hpp"
#include "gestop/synth_data.hpp"
#include "http_client.hpp"
#include "test_util.hpp"

using namespace gestop;
using namespace gestop::test_util;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

// Always predicts "fist" (static) and "circle" (dynamic).
void write_fixed_models(const fs::path& dir) {
  auto s = nn::make_static_net({"none", "fist", "point"}, 1, 4);
  s.output.weight.setZero();
  s.output.bias << 0.0, 4.0, 0.0;
  nn::save_model(s, dir / "static.model");
  auto d = nn::make_dynamic_net({"circle", "swipe_up"}, 1, 4, 3);
  d.head.weight.setZero();
  d.head.bias << 3.0, 0.0;
  nn::save_model(d, dir / "dynamic.model");
}

DaemonConfig test_config(const fs::path& home) {
  DaemonConfig cfg;
  cfg.ingress_port = 0;
  cfg.control_port = 0;
  cfg.home = home;
  cfg.static_model = home / "static.model";
  cfg.dynamic_model = home / "dynamic.model";
  cfg.dispatch_log = home / "dispatch.jsonl";
  cfg.retrain.epochs = 5;
  return cfg;
}

std::vector<KeypointFrame> palm_frames(std::size_t n, bool signal = false, std::int64_t t0 = 0) {
  std::vector<KeypointFrame> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = synth::frame_from_table(synth::kOpenPalmPose);
    f.landmarks[landmark::kIndexTip].x = 0.001 * static_cast<double>(i);
    f.timestamp_ms = t0 + static_cast<std::int64_t>(i) * 33;
    f.signal = signal;
    out.push_back(f);
  }
  return out;
}

void send(Daemon& d, const std::vector<KeypointFrame>& frames) {
  const auto before = d.frames_processed();
  send_frames("127.0.0.1", d.ingress_port(), frames, ReplaySpeed::max());
  ASSERT_TRUE(d.wait_for_frames(before + frames.size(), 10s));
}

std::vector<nlohmann::json> read_log(const fs::path& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::size_t count_calls(const LoggingSink& sink, const std::string& call) {
  const auto calls = sink.calls();
  return static_cast<std::size_t>(std::count(calls.begin(), calls.end(), call));
}

class DaemonTest : public ::testing::Test {
 protected:
  void SetUp() override {
    home = temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    write_fixed_models(home);
  }

  fs::path home;
  LoggingSink sink{false};
};

}  // namespace

TEST_F(DaemonTest, ReplayProducesOneCursorRecordPerFrameInOrder) {
  {
    Daemon d(test_config(home), sink);
    d.start();
    send(d, palm_frames(100));
    d.stop();
  }
  const auto log = read_log(home / "dispatch.jsonl");
  std::vector<int> xs;
  for (const auto& rec : log) {
    if (rec["gesture"] == "cursor") xs.push_back(std::stoi(rec["target"].get<std::string>()));
  }
  ASSERT_GE(xs.size(), 100u);
  EXPECT_TRUE(std::is_sorted(xs.begin(), xs.end()));
  // The fixed static model fires "fist" once.
  EXPECT_EQ(std::count_if(log.begin(), log.end(), [](const auto& r) { return r["gesture"] == "fist"; }), 1);
}

TEST_F(DaemonTest, PutConfigHotSwapsMapping) {
  Daemon d(test_config(home), sink);
  d.start();
  const auto port = d.control_port();
  auto before = http_get(port, "/config").json();
  EXPECT_EQ(before["fist"], nlohmann::json({"py", "no_func"}));

  send(d, palm_frames(10));
  EXPECT_EQ(count_calls(sink, "take_screenshot"), 0u);

  auto put = http_put(port, "/config", R"({"fist": ["py", "take_screenshot"], "circle": ["py", "scroll_up"]})");
  ASSERT_EQ(put.status, 200u) << put.body;
  EXPECT_EQ(http_get(port, "/config").json()["fist"], nlohmann::json({"py", "take_screenshot"}));

  // A new pose run restarts the debounce streak.
  send(d, palm_frames(1, true));
  send(d, palm_frames(10));
  EXPECT_EQ(count_calls(sink, "take_screenshot"), 1u);
}

TEST_F(DaemonTest, GrabSwipeSwapThroughControlPlane) {
  Daemon d(test_config(home), sink);
  d.start();
  const auto port = d.control_port();
  ASSERT_EQ(http_put(port, "/config", "\"Grab\" : [\"py\", \"no_func\"],\n\"Swipe +\" : [\"py\", \"take_screenshot\"],\n").status, 200u);
  const auto cfg = http_get(port, "/config").json();
  EXPECT_EQ(cfg["Grab"], nlohmann::json({"py", "no_func"}));
  EXPECT_EQ(cfg["Swipe +"], nlohmann::json({"py", "take_screenshot"}));
}

TEST_F(DaemonTest, InvalidConfigIsRejectedAndKept) {
  auto cfg = test_config(home);
  save_mapping(default_mapping(), home / "mapping.json");
  cfg.mapping = home / "mapping.json";
  Daemon d(cfg, sink);
  d.start();
  const auto before = http_get(d.control_port(), "/config").body;
  const auto bad = http_put(d.control_port(), "/config", R"({"X": ["rb", "f"]})");
  EXPECT_EQ(bad.status, 400u);
  EXPECT_EQ(bad.json()["error"], "UnknownActionType");
  EXPECT_EQ(http_get(d.control_port(), "/config").body, before);
  EXPECT_EQ(load_mapping(home / "mapping.json"), default_mapping());

  ASSERT_EQ(http_put(d.control_port(), "/config", R"({"Tap": ["sh", "true"]})").status, 200u);
  EXPECT_EQ(load_mapping(home / "mapping.json").entries.size(), 1u);
}

TEST_F(DaemonTest, LabelsAndStatus) {
  Daemon d(test_config(home), sink);
  d.start();
  const auto labels = http_get(d.control_port(), "/labels").json();
  EXPECT_EQ(labels["static"], nlohmann::json({"none", "fist", "point"}));
  EXPECT_EQ(labels["dynamic"], nlohmann::json({"circle", "swipe_up"}));
  send(d, palm_frames(7));
  const auto status = http_get(d.control_port(), "/status").json();
  EXPECT_EQ(status["type"], "status");
  EXPECT_EQ(status["frames"], 7);
  EXPECT_EQ(status["recording"], nullptr);
}

TEST_F(DaemonTest, SignalEndpointDelimitsDynamicGesture) {
  auto cfg = test_config(home);
  Daemon d(cfg, sink);
  d.start();
  const auto port = d.control_port();
  ASSERT_EQ(http_put(port, "/config", R"({"circle": ["py", "scroll_up"]})").status, 200u);
  EXPECT_EQ(http_post(port, "/signal", "on").json()["signal"], true);
  send(d, palm_frames(15));
  EXPECT_EQ(count_calls(sink, "scroll 1"), 0u);
  EXPECT_EQ(http_post(port, "/signal", R"({"on": false})").json()["signal"], false);
  send(d, palm_frames(1));
  EXPECT_EQ(count_calls(sink, "scroll 1"), 1u);
  EXPECT_EQ(http_post(port, "/signal", "sideways").status, 400u);
}

TEST_F(DaemonTest, RoutingErrors) {
  const auto dash = home / "dash";
  fs::create_directories(dash);
  std::ofstream(dash / "index.html") << "<html>hi</html>";
  std::ofstream(home / "secret.txt") << "secret";
  auto cfg = test_config(home);
  cfg.dashboard_dir = dash;
  Daemon d(cfg, sink);
  d.start();
  const auto port = d.control_port();
  EXPECT_EQ(http_call(port, boost::beast::http::verb::delete_, "/config").status, 405u);
  EXPECT_EQ(http_post(port, "/nowhere").status, 404u);
  const auto index = http_get(port, "/");
  EXPECT_EQ(index.status, 200u);
  EXPECT_EQ(index.body, "<html>hi</html>");
  EXPECT_EQ(index.content_type, "text/html");
  EXPECT_EQ(http_get(port, "/../secret.txt").status, 404u);
  EXPECT_EQ(http_get(port, "/missing.js").status, 404u);
  EXPECT_EQ(http_post(port, "/record/start", R"({"kind": "both", "label": "x"})").status, 400u);
  EXPECT_EQ(http_post(port, "/record/start", R"({"kind": "static"})").status, 400u);
  EXPECT_EQ(http_post(port, "/retrain", "{nope").status, 400u);
}

TEST_F(DaemonTest, WebSocketStreamsStatusFramesAndCursor) {
  Daemon d(test_config(home), sink);
  d.start();
  EventClient client(d.control_port());
  EXPECT_EQ(client.next()["type"], "status");
  for (int i = 0; i < 200 && d.events().subscriber_count() == 0; ++i) std::this_thread::sleep_for(5ms);
  send(d, palm_frames(6));
  const auto frame = client.next_of("frame");
  EXPECT_EQ(frame["landmarks"].size(), 21u);
  EXPECT_EQ(frame["handedness"], "R");
  EXPECT_EQ(frame["signal"], false);
  const auto cursor = client.next_of("cursor");
  EXPECT_TRUE(cursor["x"].is_number_integer());
  const auto gesture = client.next_of("gesture");
  EXPECT_EQ(gesture["name"], "fist");
  EXPECT_EQ(gesture["kind"], "static");
  client.close();
}

TEST_F(DaemonTest, RecordThenRetrainAddsLabel) {
  save_static_csv(synth::static_dataset(20, synth::kDefaultStaticNoise, 4), home / "data" / "static.csv");
  Daemon d(test_config(home), sink);
  d.start();
  const auto port = d.control_port();
  EventClient client(port);
  client.next();

  ASSERT_EQ(http_post(port, "/record/start", R"({"kind": "static", "label": "Seven"})").status, 200u);
  EXPECT_EQ(http_get(port, "/status").json()["recording"]["label"], "Seven");
  auto seven = synth::synth_static("hitchhike", 30, 0.01, 9).frames;
  for (auto& f : seven) f.landmarks[landmark::kThumbTip].y -= 0.05;
  send(d, seven);
  const auto stopped = http_post(port, "/record/stop").json();
  EXPECT_EQ(stopped["samples"], 30);

  const auto retrain = http_post(port, "/retrain", R"({"kind": "static"})");
  ASSERT_EQ(retrain.status, 200u) << retrain.body;
  for (int epoch = 1; epoch <= 5; ++epoch) {
    const auto msg = client.next_of("training");
    EXPECT_EQ(msg["epoch"], epoch);
    EXPECT_TRUE(msg["loss"].is_number());
    EXPECT_TRUE(msg["val_acc"].is_number());
  }
  const auto labels = http_get(port, "/labels").json()["static"];
  EXPECT_NE(std::find(labels.begin(), labels.end(), "Seven"), labels.end());
  EXPECT_EQ(labels[0], "none");
  EXPECT_TRUE(fs::exists(home / "static.model"));
  client.close();
}

TEST_F(DaemonTest, RecordDynamicThenRetrain) {
  save_dynamic_dir(synth::dynamic_dataset(6, synth::kDefaultDynamicNoise, 2, 12, 16), home / "data" / "dynamic");
  Daemon d(test_config(home), sink);
  d.start();
  const auto port = d.control_port();
  ASSERT_EQ(http_post(port, "/record/start", R"({"kind": "dynamic", "label": "Circle"})").status, 200u);
  for (int run = 0; run < 3; ++run) {
    auto frames = synth::synth_dynamic("circle", 15, 0.002, static_cast<std::uint64_t>(run)).frames;
    frames.push_back(palm_frames(1)[0]);
    send(d, frames);
  }
  EXPECT_EQ(http_post(port, "/record/stop").json()["samples"], 3);
  const auto retrain = http_post(port, "/retrain", R"({"kind": "dynamic"})");
  ASSERT_EQ(retrain.status, 200u) << retrain.body;
  const auto labels = http_get(port, "/labels").json()["dynamic"];
  EXPECT_NE(std::find(labels.begin(), labels.end(), "Circle"), labels.end());
}

TEST_F(DaemonTest, StalledSubscriberDoesNotBlockFrames) {
  Daemon d(test_config(home), sink);
  d.start();
  auto stalled = d.events().subscribe();
  send(d, palm_frames(3000));
  EXPECT_EQ(d.frames_processed(), 3000u);
  EXPECT_GT(stalled->dropped(), 0u);
  d.events().unsubscribe(stalled);
}

TEST_F(DaemonTest, StopDrainsQueueAndFlushesLog) {
  auto d = std::make_unique<Daemon>(test_config(home), sink);
  d->start();
  send_frames("127.0.0.1", d->ingress_port(), palm_frames(500), ReplaySpeed::max());
  d->stop();
  EXPECT_EQ(d->frames_processed(), 500u);
  const auto log = read_log(home / "dispatch.jsonl");
  EXPECT_EQ(std::count_if(log.begin(), log.end(), [](const auto& r) { return r["gesture"] == "cursor"; }), 500);
}

TEST(DaemonConfigTest, Validation) {
  const auto home = temp_dir("daemon_cfg");
  DaemonConfig cfg;
  cfg.home = home;
  cfg.ingress_port = 7000;
  cfg.control_port = 7000;
  EXPECT_EQ(error_code([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg.control_port = 7001;
  cfg.static_model = home / "missing.model";
  EXPECT_EQ(error_code([&] { cfg.validate(); }), ErrorCode::IOFailure);
  cfg.static_model.clear();
  cfg.calibration_k = 0.5;
  EXPECT_EQ(error_code([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg.calibration_k = 2.0;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.static_data(), home / "data" / "static.csv");
}

TEST(DaemonConfigTest, HomeFromEnvironment) {
  ::setenv("GESTOP_HOME", "/tmp/somewhere", 1);
  EXPECT_EQ(gestop_home(), fs::path("/tmp/somewhere"));
  ::unsetenv("GESTOP_HOME");
  EXPECT_NE(gestop_home(), fs::path("/tmp/somewhere"));
}

TEST(DaemonConfigTest, BusyPortIsBindFailure) {
  const auto home = temp_dir("daemon_busy");
  LoggingSink sink(false);
  DaemonConfig cfg;
  cfg.home = home;
  cfg.ingress_port = 0;
  cfg.control_port = 0;
  Daemon first(cfg, sink);
  first.start();
  cfg.control_port = first.control_port();
  Daemon second(cfg, sink);
  EXPECT_EQ(error_code([&] { second.start(); }), ErrorCode::BindFailure);
}
