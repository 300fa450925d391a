#pragma once

// Line codec for keypoint frames, shared by the TCP ingress and replay files.
//
//   v=1,t=<int>,h=<L|R>,s=<0|1>,x0,y0,z0,...,x20,y20,z20\n
//
// Replay files prepend one header line:
//
//   #gestop-replay v=1 label=<name|-> fps=<int|->

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "gestop/core.hpp"
#include "gestop/error.hpp"

namespace gestop {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kRecordFieldCount = 4 + kCoordinateCount;

namespace detail {

inline void append_double(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  double value = 0.0;
  if (s.empty()) return std::nullopt;
  // from_chars rejects a leading '+', accept it anyway for foreign producers.
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t value = 0;
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::string_view trim_eol(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

/// Serializes a valid frame as one newline-terminated record. Coordinates use
/// the shortest decimal form that round-trips exactly.
inline std::string encode_frame(const KeypointFrame& frame) {
  std::string out;
  out.reserve(64 + kCoordinateCount * 12);
  out += "v=";
  out += std::to_string(kSchemaVersion);
  out += ",t=";
  out += std::to_string(frame.timestamp_ms);
  out += ",h=";
  out += to_char(frame.handedness);
  out += ",s=";
  out += frame.signal ? '1' : '0';
  for (const auto& p : frame.landmarks) {
    for (double c : {p.x, p.y, p.z}) {
      out += ',';
      detail::append_double(out, c);
    }
  }
  out += '\n';
  return out;
}

inline KeypointFrame decode_frame(std::string_view line) {
  line = detail::trim_eol(line);
  auto fields = detail::split(line, ',');
  auto malformed = [](const std::string& why) { return Error(ErrorCode::MalformedRecord, why); };

  if (fields.empty() || fields[0].substr(0, 2) != "v=") throw malformed("missing schema version");
  auto version = detail::parse_int(fields[0].substr(2));
  if (!version) throw malformed("unparseable schema version");
  if (*version != kSchemaVersion) {
    throw Error(ErrorCode::UnsupportedSchemaVersion, std::to_string(*version));
  }
  if (fields.size() != kRecordFieldCount) {
    throw malformed("expected " + std::to_string(kRecordFieldCount) + " fields, got " +
                    std::to_string(fields.size()));
  }
  if (fields[1].substr(0, 2) != "t=") throw malformed("missing timestamp");
  auto ts = detail::parse_int(fields[1].substr(2));
  if (!ts) throw malformed("unparseable timestamp");
  if (fields[2] != "h=L" && fields[2] != "h=R") throw malformed("bad handedness");
  if (fields[3] != "s=0" && fields[3] != "s=1") throw malformed("bad signal flag");

  RawFrame raw;
  raw.timestamp_ms = *ts;
  raw.handedness = fields[2] == "h=L" ? Handedness::Left : Handedness::Right;
  raw.signal = fields[3] == "s=1";
  raw.landmarks.resize(kLandmarkCount);
  for (std::size_t i = 0; i < kCoordinateCount; ++i) {
    auto value = detail::parse_double(fields[4 + i]);
    if (!value) throw malformed("unparseable coordinate " + std::to_string(i));
    auto& p = raw.landmarks[i / 3];
    (i % 3 == 0 ? p.x : i % 3 == 1 ? p.y : p.z) = *value;
  }
  return validate_frame(raw);
}

struct ReplayHeader {
  int schema_version = kSchemaVersion;
  std::optional<std::string> label;
  std::optional<int> fps;

  friend bool operator==(const ReplayHeader&, const ReplayHeader&) = default;
};

struct ReplayFile {
  ReplayHeader header;
  std::vector<KeypointFrame> frames;
};

inline constexpr std::string_view kReplayMagic = "#gestop-replay";

inline std::string encode_header(const ReplayHeader& header) {
  std::string out(kReplayMagic);
  out += " v=" + std::to_string(header.schema_version);
  out += " label=" + (header.label ? *header.label : std::string("-"));
  out += " fps=" + (header.fps ? std::to_string(*header.fps) : std::string("-"));
  out += '\n';
  return out;
}

/// Labels may contain spaces ("Swipe +"): the label runs from "label=" up to
/// the final " fps=".
inline ReplayHeader decode_header(std::string_view line, std::size_t line_no = 1) {
  line = detail::trim_eol(line);
  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::MalformedRecord, "replay header: " + why, line_no);
  };
  if (line.substr(0, kReplayMagic.size()) != kReplayMagic) throw malformed("missing magic");
  auto rest = line.substr(kReplayMagic.size());
  auto v_pos = rest.find(" v=");
  auto label_pos = rest.find(" label=");
  auto fps_pos = rest.rfind(" fps=");
  if (v_pos == std::string_view::npos || label_pos == std::string_view::npos ||
      fps_pos == std::string_view::npos || !(v_pos < label_pos && label_pos < fps_pos)) {
    throw malformed("expected v=, label= and fps= fields");
  }
  ReplayHeader header;
  auto version = detail::parse_int(rest.substr(v_pos + 3, label_pos - v_pos - 3));
  if (!version) throw malformed("unparseable version");
  if (*version != kSchemaVersion) {
    throw Error(ErrorCode::UnsupportedSchemaVersion, std::to_string(*version), line_no);
  }
  header.schema_version = static_cast<int>(*version);
  auto label = rest.substr(label_pos + 7, fps_pos - label_pos - 7);
  if (label.empty()) throw malformed("empty label");
  if (label != "-") header.label = std::string(label);
  auto fps = rest.substr(fps_pos + 5);
  if (fps != "-") {
    auto value = detail::parse_int(fps);
    if (!value || *value <= 0) throw malformed("bad fps");
    header.fps = static_cast<int>(*value);
  }
  return header;
}

/// Parses replay text. The header is optional so raw wire captures are
/// readable; timestamps must be non-decreasing.
inline ReplayFile parse_replay(std::istream& in) {
  ReplayFile file;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::int64_t> last_ts;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim_eol(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      if (line_no == 1 && view.substr(0, kReplayMagic.size()) == kReplayMagic) {
        file.header = decode_header(view, line_no);
      }
      continue;
    }
    KeypointFrame frame;
    try {
      frame = decode_frame(view);
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), line_no);
    }
    if (last_ts && frame.timestamp_ms < *last_ts) {
      throw Error(ErrorCode::MalformedRecord, "timestamp decreases", line_no);
    }
    last_ts = frame.timestamp_ms;
    file.frames.push_back(frame);
  }
  return file;
}

inline ReplayFile read_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
  return parse_replay(in);
}

inline void write_replay(std::ostream& out, const ReplayFile& file) {
  out << encode_header(file.header);
  for (const auto& f : file.frames) out << encode_frame(f);
}

inline void write_replay(const std::filesystem::path& path, const ReplayFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  write_replay(out, file);
  if (!out) throw Error(ErrorCode::IOFailure, "write failed " + path.string());
}

/// Replay pacing: a positive multiplier of recorded time, or as fast as
/// possible when empty.
struct ReplaySpeed {
  std::optional<double> multiplier;

  static ReplaySpeed max() { return {}; }
  static ReplaySpeed parse(std::string_view text) {
    if (text == "max") return max();
    auto value = detail::parse_double(text);
    if (!value || !(*value > 0.0) || !std::isfinite(*value)) {
      throw Error(ErrorCode::InvalidArgument, "speed must be 'max' or a positive number");
    }
    return {*value};
  }
};

using FrameSink = std::function<void(const KeypointFrame&)>;

/// Delivers the file's frames to `sink` in order, sleeping between frames
/// according to their timestamps unless the speed is max.
inline std::size_t replay(const ReplayFile& file, ReplaySpeed speed, const FrameSink& sink) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const std::int64_t t0 = file.frames.empty() ? 0 : file.frames.front().timestamp_ms;
  for (const auto& frame : file.frames) {
    if (speed.multiplier) {
      auto offset = std::chrono::duration<double, std::milli>(
          static_cast<double>(frame.timestamp_ms - t0) / *speed.multiplier);
      std::this_thread::sleep_until(start + std::chrono::duration_cast<Clock::duration>(offset));
    }
    sink(frame);
  }
  return file.frames.size();
}

}  // namespace gestop
