#pragma once

// Gesture -> action dispatch.
//
// Mapping file: a JSON object {"<gesture>": ["sh"|"py", "<target>"], ...}.
// "sh" targets are shell commands; "py" targets name a built-in action
// (the token is kept for compatibility with existing config files).

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gestop/core.hpp"
#include "gestop/error.hpp"

extern char** environ;

namespace gestop {

enum class ActionType { Shell, Builtin };

constexpr std::string_view to_token(ActionType t) { return t == ActionType::Shell ? "sh" : "py"; }

struct Action {
  ActionType type = ActionType::Builtin;
  std::string target;

  friend bool operator==(const Action&, const Action&) = default;
};

inline constexpr std::string_view kNoFunc = "no_func";

inline constexpr std::array<std::string_view, 8> kBuiltinActions{
    "no_func",          "take_screenshot", "mouse_left_click", "mouse_right_click",
    "mouse_double_click", "scroll_up",     "scroll_down",      "key_escape",
};

inline bool is_builtin(std::string_view name) {
  return std::find(kBuiltinActions.begin(), kBuiltinActions.end(), name) != kBuiltinActions.end();
}

struct ActionMapping {
  std::map<std::string, Action> entries;

  const Action* find(std::string_view gesture) const {
    auto it = entries.find(std::string(gesture));
    return it == entries.end() ? nullptr : &it->second;
  }

  friend bool operator==(const ActionMapping&, const ActionMapping&) = default;
};

namespace detail {

// Accepts Python-literal style configs: single-quoted strings become JSON
// strings and trailing commas before } or ] are dropped.
inline std::string normalize_config_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '"' || c == '\'') {
      const char quote = c;
      out += '"';
      for (++i; i < text.size() && text[i] != quote; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          if (quote == '\'' && text[i + 1] == '\'') {
            out += '\'';
          } else {
            out += text[i];
            out += text[i + 1];
          }
          ++i;
        } else if (quote == '\'' && text[i] == '"') {
          out += "\\\"";
        } else {
          out += text[i];
        }
      }
      out += '"';
      continue;
    }
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

}  // namespace detail

inline ActionMapping mapping_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "mapping must be a JSON object");
  ActionMapping mapping;
  for (const auto& [gesture, value] : doc.items()) {
    if (!value.is_array() || value.size() != 2 || !value[0].is_string() || !value[1].is_string()) {
      throw Error(ErrorCode::ParseError, "'" + gesture + "' must map to [\"type\", \"target\"]");
    }
    const auto type = value[0].get<std::string>();
    const auto target = value[1].get<std::string>();
    Action action;
    if (type == "sh") {
      if (target.empty()) throw Error(ErrorCode::ParseError, "'" + gesture + "' has an empty command");
      action = {ActionType::Shell, target};
    } else if (type == "py") {
      if (!is_builtin(target)) throw Error(ErrorCode::UnknownBuiltin, target);
      action = {ActionType::Builtin, target};
    } else {
      throw Error(ErrorCode::UnknownActionType, "'" + type + "' for gesture '" + gesture + "'");
    }
    mapping.entries.emplace(gesture, std::move(action));
  }
  return mapping;
}

inline ActionMapping parse_mapping(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    const auto first = text.find_first_not_of(" \t\r\n");
    const auto body = first == std::string_view::npos ? std::string_view{} : text.substr(first);
    // A bare member list (no enclosing braces) is read as one object.
    const bool bare = !body.empty() && body.front() == '"';
    try {
      doc = nlohmann::json::parse(
          detail::normalize_config_text(bare ? "{" + std::string(body) + "}" : std::string(body)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, e.what());
    }
  }
  return mapping_from_json(doc);
}

inline ActionMapping load_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mapping(buf.str());
}

inline nlohmann::json to_json(const ActionMapping& mapping) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [gesture, action] : mapping.entries) {
    doc[gesture] = {std::string(to_token(action.type)), action.target};
  }
  return doc;
}

inline void save_mapping(const ActionMapping& mapping, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out << to_json(mapping).dump(2) << '\n';
}

/// Default mapping shipped with the daemon.
inline ActionMapping default_mapping() {
  return parse_mapping(R"({
    "point": ["py", "mouse_left_click"],
    "peace": ["py", "mouse_right_click"],
    "hitchhike": ["py", "mouse_double_click"],
    "fist": ["py", "no_func"],
    "open_palm": ["py", "no_func"],
    "Grab": ["py", "take_screenshot"],
    "Swipe +": ["py", "no_func"],
    "swipe_up": ["py", "scroll_up"],
    "swipe_down": ["py", "scroll_down"],
    "swipe_left": ["py", "key_escape"],
    "swipe_right": ["py", "no_func"],
    "circle": ["py", "no_func"]
  })");
}

// ------------------------------------------------------------ shell runner

/// Runs shell commands detached from the caller. Each child is reaped by a
/// background thread and killed (with its process group) after the timeout.
class ShellRunner {
 public:
  explicit ShellRunner(std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : timeout_(timeout), reaper_([this] { reap_loop(); }) {}

  ShellRunner(const ShellRunner&) = delete;
  ShellRunner& operator=(const ShellRunner&) = delete;

  /// Kills anything still running.
  ~ShellRunner() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      for (auto& c : children_) ::kill(-c.pid, SIGKILL);
    }
    cv_.notify_all();
    reaper_.join();
  }

  /// Returns the child's pid. Throws ShellSpawnFailure.
  pid_t spawn(const std::string& command) {
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, "/bin/sh", nullptr, &attr, const_cast<char* const*>(argv), environ);
    posix_spawnattr_destroy(&attr);
    if (rc != 0) throw Error(ErrorCode::ShellSpawnFailure, std::strerror(rc));
    {
      std::lock_guard lock(mu_);
      children_.push_back({pid, command, std::chrono::steady_clock::now()});
      ++spawned_;
    }
    cv_.notify_all();
    return pid;
  }

  std::size_t running() const {
    std::lock_guard lock(mu_);
    return children_.size();
  }

  std::size_t timed_out() const { return timed_out_.load(); }

  /// Blocks until every child has exited or `limit` elapses.
  bool wait_idle(std::chrono::milliseconds limit) {
    std::unique_lock lock(mu_);
    return idle_cv_.wait_for(lock, limit, [this] { return children_.empty(); });
  }

 private:
  struct Child {
    pid_t pid;
    std::string command;
    std::chrono::steady_clock::time_point started;
  };

  void reap_loop() {
    std::unique_lock lock(mu_);
    while (true) {
      if (children_.empty()) {
        idle_cv_.notify_all();
        if (stopping_) return;
        cv_.wait(lock, [this] { return stopping_ || !children_.empty(); });
        continue;
      }
      cv_.wait_for(lock, std::chrono::milliseconds(20));
      const auto now = std::chrono::steady_clock::now();
      for (auto it = children_.begin(); it != children_.end();) {
        int status = 0;
        const pid_t r = ::waitpid(it->pid, &status, WNOHANG);
        if (r == it->pid || r < 0) {
          if (r == it->pid && WIFEXITED(status)) {
            spdlog::debug("shell '{}' exited with {}", it->command, WEXITSTATUS(status));
          } else if (r == it->pid && WIFSIGNALED(status)) {
            spdlog::debug("shell '{}' killed by signal {}", it->command, WTERMSIG(status));
          }
          it = children_.erase(it);
          continue;
        }
        if (stopping_ || now - it->started > timeout_) {
          if (!stopping_) {
            spdlog::warn("shell '{}' exceeded {} ms, killing", it->command, timeout_.count());
            ++timed_out_;
          }
          ::kill(-it->pid, SIGKILL);
        }
        ++it;
      }
    }
  }

  std::chrono::milliseconds timeout_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::vector<Child> children_;
  bool stopping_ = false;
  std::size_t spawned_ = 0;
  std::atomic<std::size_t> timed_out_{0};
  std::thread reaper_;
};

// ------------------------------------------------------------------- sinks

enum class MouseButton { Left, Right };

/// Where actions land. Methods return a short outcome string ("ok" or an
/// error description) that ends up in the dispatch record.
class ActionSink {
 public:
  virtual ~ActionSink() = default;
  virtual std::string move_cursor(int x, int y) = 0;
  virtual std::string click(MouseButton button) = 0;
  virtual std::string double_click() = 0;
  virtual std::string scroll(int amount) = 0;
  virtual std::string key_press(const std::string& key) = 0;
  virtual std::string take_screenshot() = 0;
  virtual std::string run_shell(const std::string& command) = 0;
};

/// Default sink: no OS input injection. Records each call (for inspection and
/// tests) and runs shell actions through a ShellRunner unless disabled.
class LoggingSink : public ActionSink {
 public:
  /// `keep` bounds the remembered call history (oldest calls are dropped).
  explicit LoggingSink(bool run_shell_commands = true,
                       std::chrono::milliseconds shell_timeout = std::chrono::seconds(30),
                       std::size_t keep = std::numeric_limits<std::size_t>::max())
      : keep_(keep), shell_(run_shell_commands ? std::make_unique<ShellRunner>(shell_timeout) : nullptr) {}

  std::string move_cursor(int x, int y) override {
    return note("move_cursor " + std::to_string(x) + "," + std::to_string(y));
  }
  std::string click(MouseButton b) override {
    return note(b == MouseButton::Left ? "click left" : "click right");
  }
  std::string double_click() override { return note("double_click"); }
  std::string scroll(int amount) override { return note("scroll " + std::to_string(amount)); }
  std::string key_press(const std::string& key) override { return note("key_press " + key); }
  std::string take_screenshot() override { return note("take_screenshot"); }
  std::string run_shell(const std::string& command) override {
    note("run_shell " + command);
    if (!shell_) return "skipped";
    try {
      shell_->spawn(command);
      return "spawned";
    } catch (const Error& e) {
      return std::string("error: ") + e.what();
    }
  }

  std::vector<std::string> calls() const {
    std::lock_guard lock(mu_);
    return {calls_.begin(), calls_.end()};
  }

  void clear() {
    std::lock_guard lock(mu_);
    calls_.clear();
  }

  ShellRunner* shell() { return shell_.get(); }

 private:
  std::string note(std::string call) {
    spdlog::debug("sink: {}", call);
    std::lock_guard lock(mu_);
    calls_.push_back(std::move(call));
    if (calls_.size() > keep_) calls_.pop_front();
    return "ok";
  }

  std::size_t keep_;
  mutable std::mutex mu_;
  std::deque<std::string> calls_;
  std::unique_ptr<ShellRunner> shell_;
};

// ---------------------------------------------------------------- dispatch

struct DispatchRecord {
  std::int64_t ts = 0;  // wall clock, ms since epoch
  std::string gesture;
  std::string action_type;
  std::string target;
  std::string outcome;

  nlohmann::json to_json() const {
    return {{"ts", ts}, {"gesture", gesture}, {"action_type", action_type}, {"target", target},
            {"outcome", outcome}};
  }
};

/// Thread-safe JSON-lines writer; one line per dispatch.
class DispatchLog {
 public:
  explicit DispatchLog(const std::filesystem::path& path) : file_(path, std::ios::app), out_(&file_) {
    if (!file_) throw Error(ErrorCode::IOFailure, "cannot open dispatch log " + path.string());
  }
  explicit DispatchLog(std::ostream& out) : out_(&out) {}

  void write(const DispatchRecord& rec) {
    const auto line = rec.to_json().dump();
    std::lock_guard lock(mu_);
    *out_ << line << '\n';
  }

  void flush() {
    std::lock_guard lock(mu_);
    out_->flush();
  }

 private:
  std::mutex mu_;
  std::ofstream file_;
  std::ostream* out_;
};

inline std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// Resolves gesture events against the active mapping and drives the sink.
/// The mapping is replaced as a whole; each dispatch works on one snapshot.
class Executor {
 public:
  Executor(ActionMapping mapping, ActionSink& sink, DispatchLog* log = nullptr)
      : mapping_(std::make_shared<const ActionMapping>(std::move(mapping))), sink_(sink), log_(log) {}

  std::shared_ptr<const ActionMapping> mapping() const {
    std::lock_guard lock(mapping_mu_);
    return mapping_;
  }

  void swap_mapping(ActionMapping next) {
    auto fresh = std::make_shared<const ActionMapping>(std::move(next));
    std::lock_guard lock(mapping_mu_);
    mapping_.swap(fresh);
  }

  DispatchRecord execute(const GestureEvent& event) {
    DispatchRecord rec = dispatch(event, *mapping());
    rec.ts = wall_clock_ms();
    if (log_) log_->write(rec);
    return rec;
  }

 private:
  DispatchRecord dispatch(const GestureEvent& event, const ActionMapping& mapping) {
    DispatchRecord rec;
    if (const auto* c = event.cursor()) {
      rec.gesture = "cursor";
      rec.action_type = "cursor";
      rec.target = std::to_string(c->x_px) + "," + std::to_string(c->y_px);
      rec.outcome = guarded([&] { return sink_.move_cursor(c->x_px, c->y_px); });
      return rec;
    }
    const auto& name = event.label()->name;
    rec.gesture = name;
    const Action* action = mapping.find(name);
    if (!action) {
      spdlog::warn("no action mapped for gesture '{}'", name);
      rec.action_type = "none";
      rec.outcome = "unmapped";
      return rec;
    }
    rec.action_type = std::string(to_token(action->type));
    rec.target = action->target;
    if (action->type == ActionType::Shell) {
      rec.outcome = guarded([&] { return sink_.run_shell(action->target); });
      return rec;
    }
    rec.outcome = guarded([&] { return run_builtin(action->target); });
    return rec;
  }

  std::string run_builtin(const std::string& name) {
    if (name == kNoFunc) return "noop";
    if (name == "take_screenshot") return sink_.take_screenshot();
    if (name == "mouse_left_click") return sink_.click(MouseButton::Left);
    if (name == "mouse_right_click") return sink_.click(MouseButton::Right);
    if (name == "mouse_double_click") return sink_.double_click();
    if (name == "scroll_up") return sink_.scroll(1);
    if (name == "scroll_down") return sink_.scroll(-1);
    if (name == "key_escape") return sink_.key_press("Escape");
    return "error: unknown builtin " + name;
  }

  template <class F>
  static std::string guarded(F&& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return std::string("error: ") + e.what();
    }
  }

  mutable std::mutex mapping_mu_;
  std::shared_ptr<const ActionMapping> mapping_;
  ActionSink& sink_;
  DispatchLog* log_;
};

}  // namespace gestop
