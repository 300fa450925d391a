#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "gestop/executor.hpp"
#include "test_util.hpp"

using namespace gestop;
using gestop::test_util::error_code;

namespace {

// Config fragments as printed in the original write-up.
constexpr std::string_view kFirstMapping = R"(
    "Grab" : ["py", "take_screenshot"],
    "Swipe +" : ["py", "no_func"],
)";
constexpr std::string_view kSwappedMapping = R"(
    "Grab" : ["py", "no_func"],
    "Swipe +" : ["py", "take_screenshot"],
)";
constexpr std::string_view kTapMapping = "{'Tap':['sh','./script.sh']}";

GestureEvent gesture(const std::string& name) {
  GestureEvent e;
  e.what = GestureLabel{name, GestureKind::Static};
  return e;
}

GestureEvent cursor(int x, int y) {
  GestureEvent e;
  e.what = CursorMove{x, y};
  return e;
}

}  // namespace

TEST(Mapping, StrictJsonExample) {
  const auto m = parse_mapping(R"({"Grab": ["py", "take_screenshot"], "Swipe +": ["py", "no_func"]})");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries.at("Grab"), (Action{ActionType::Builtin, "take_screenshot"}));
  EXPECT_EQ(m.entries.at("Swipe +"), (Action{ActionType::Builtin, "no_func"}));
}

TEST(Mapping, VerbatimFragmentsLoad) {
  const auto first = parse_mapping(kFirstMapping);
  EXPECT_EQ(first.entries.at("Grab").target, "take_screenshot");
  const auto swapped = parse_mapping(kSwappedMapping);
  EXPECT_EQ(swapped.entries.at("Swipe +").target, "take_screenshot");
  const auto tap = parse_mapping(kTapMapping);
  EXPECT_EQ(tap.entries.at("Tap"), (Action{ActionType::Shell, "./script.sh"}));
}

TEST(Mapping, Errors) {
  EXPECT_EQ(error_code([] { parse_mapping(R"({"X": ["rb", "f"]})"); }), ErrorCode::UnknownActionType);
  EXPECT_EQ(error_code([] { parse_mapping(R"({"X": ["py", "launch_rockets"]})"); }), ErrorCode::UnknownBuiltin);
  EXPECT_EQ(error_code([] { parse_mapping(R"({"X": ["py"]})"); }), ErrorCode::ParseError);
  EXPECT_EQ(error_code([] { parse_mapping(R"({"X": "py"})"); }), ErrorCode::ParseError);
  EXPECT_EQ(error_code([] { parse_mapping("[1, 2]"); }), ErrorCode::ParseError);
  EXPECT_EQ(error_code([] { parse_mapping("{not json"); }), ErrorCode::ParseError);
  EXPECT_EQ(error_code([] { parse_mapping(R"({"X": ["sh", ""]})"); }), ErrorCode::ParseError);
}

TEST(Mapping, FileRoundTrip) {
  const auto dir = gestop::test_util::temp_dir("mapping");
  const auto m = default_mapping();
  save_mapping(m, dir / "mapping.json");
  EXPECT_EQ(load_mapping(dir / "mapping.json"), m);
  EXPECT_EQ(parse_mapping(to_json(m).dump()), m);
  EXPECT_EQ(error_code([&] { load_mapping(dir / "absent.json"); }), ErrorCode::IOFailure);
}

TEST(Mapping, DefaultsUseOnlyBuiltins) {
  for (const auto& [name, action] : default_mapping().entries) {
    EXPECT_EQ(action.type, ActionType::Builtin) << name;
    EXPECT_TRUE(is_builtin(action.target));
  }
}

TEST(Executor, GrabTakesScreenshotThenSwapMovesIt) {
  LoggingSink sink(false);
  std::ostringstream log_text;
  DispatchLog log(log_text);
  Executor exec(parse_mapping(kFirstMapping), sink, &log);
  auto rec = exec.execute(gesture("Grab"));
  EXPECT_EQ(rec.target, "take_screenshot");
  EXPECT_EQ(sink.calls(), std::vector<std::string>{"take_screenshot"});

  exec.swap_mapping(parse_mapping(kSwappedMapping));
  sink.clear();
  rec = exec.execute(gesture("Grab"));
  EXPECT_EQ(rec.outcome, "noop");
  EXPECT_TRUE(sink.calls().empty());
  rec = exec.execute(gesture("Swipe +"));
  EXPECT_EQ(rec.outcome, "ok");
  EXPECT_EQ(sink.calls(), std::vector<std::string>{"take_screenshot"});

  log.flush();
  std::istringstream lines(log_text.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"ts", "gesture", "action_type", "target", "outcome"}) EXPECT_TRUE(j.contains(key));
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(Executor, EveryEventGetsOneRecord) {
  LoggingSink sink(false);
  std::ostringstream out;
  DispatchLog log(out);
  Executor exec(default_mapping(), sink, &log);
  EXPECT_EQ(exec.execute(cursor(3, 4)).target, "3,4");
  EXPECT_EQ(exec.execute(gesture("unknown thing")).outcome, "unmapped");
  EXPECT_EQ(exec.execute(gesture("point")).outcome, "ok");
  EXPECT_EQ(exec.execute(gesture("swipe_up")).outcome, "ok");
  EXPECT_EQ(exec.execute(gesture("swipe_left")).outcome, "ok");
  EXPECT_EQ(sink.calls(), (std::vector<std::string>{"move_cursor 3,4", "click left", "scroll 1", "key_press Escape"}));
  log.flush();
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Executor, SinkFailureIsRecordedNotThrown) {
  struct Broken : LoggingSink {
    Broken() : LoggingSink(false) {}
    std::string take_screenshot() override { throw std::runtime_error("no display"); }
  } sink;
  Executor exec(parse_mapping(kFirstMapping), sink);
  const auto rec = exec.execute(gesture("Grab"));
  EXPECT_EQ(rec.outcome, "error: no display");
}

TEST(Executor, ShellActionWritesSentinel) {
  const auto dir = gestop::test_util::temp_dir("shell");
  const auto out = dir / "out.txt";
  LoggingSink sink(true);
  Executor exec(parse_mapping(R"({"Tap": ["sh", "echo hi > )" + out.string() + R"("]})"), sink);
  EXPECT_EQ(exec.execute(gesture("Tap")).outcome, "spawned");
  ASSERT_TRUE(sink.shell()->wait_idle(std::chrono::seconds(10)));
  std::ifstream in(out);
  std::string text;
  std::getline(in, text);
  EXPECT_EQ(text, "hi");
}

TEST(Executor, ShellDoesNotBlockDispatch) {
  LoggingSink sink(true);
  Executor exec(parse_mapping(R"({"Wait": ["sh", "sleep 5"]})"), sink);
  const auto start = std::chrono::steady_clock::now();
  exec.execute(gesture("Wait"));
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(500));
  EXPECT_EQ(sink.shell()->running(), 1u);
}

TEST(ShellRunner, KillsAfterTimeout) {
  ShellRunner runner(std::chrono::milliseconds(100));
  runner.spawn("sleep 30");
  EXPECT_TRUE(runner.wait_idle(std::chrono::seconds(5)));
  EXPECT_EQ(runner.timed_out(), 1u);
}

TEST(Executor, ConcurrentSwapSeesWholeTables) {
  // Table A maps both gestures to screenshot, table B maps both to no_func.
  const auto a = parse_mapping(R"({"g1": ["py", "take_screenshot"], "g2": ["py", "take_screenshot"]})");
  const auto b = parse_mapping(R"({"g1": ["py", "no_func"], "g2": ["py", "no_func"]})");
  LoggingSink sink(false, std::chrono::seconds(30), 16);
  Executor exec(a, sink);
  std::atomic<bool> done{false};
  std::thread swapper([&] {
    for (int i = 0; !done; ++i) exec.swap_mapping(i % 2 ? a : b);
  });
  int mixed = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto snapshot = exec.mapping();
    if (snapshot->find("g1")->target != snapshot->find("g2")->target) ++mixed;
  }
  done = true;
  swapper.join();
  EXPECT_EQ(mixed, 0);
}

TEST(Executor, SwapToIdenticalMappingIsInvisible) {
  LoggingSink sink(false);
  Executor exec(default_mapping(), sink);
  const auto before = exec.execute(gesture("peace"));
  exec.swap_mapping(default_mapping());
  const auto after = exec.execute(gesture("peace"));
  EXPECT_EQ(before.target, after.target);
  EXPECT_EQ(before.outcome, after.outcome);
}
