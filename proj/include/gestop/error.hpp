#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gestop {

enum class ErrorCode {
  WrongLandmarkCount,
  NonFiniteCoordinate,
  NegativeTimestamp,
  MalformedRecord,
  UnsupportedSchemaVersion,
  BindFailure,
  ConnectionFailure,
  UnknownPose,
  UnknownTemplate,
  EmptySequence,
  DimensionMismatch,
  SingleClassData,
  IncompatibleModelVersion,
  CorruptModelFile,
  ParseError,
  UnknownActionType,
  UnknownBuiltin,
  ShellSpawnFailure,
  IOFailure,
  InvalidArgument,
  MissingIndexFile,
  MalformedSkeletonLine,
  ClassTooSmall,
  UnknownLabel,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::WrongLandmarkCount: return "WrongLandmarkCount";
    case ErrorCode::NonFiniteCoordinate: return "NonFiniteCoordinate";
    case ErrorCode::NegativeTimestamp: return "NegativeTimestamp";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnsupportedSchemaVersion: return "UnsupportedSchemaVersion";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::ConnectionFailure: return "ConnectionFailure";
    case ErrorCode::UnknownPose: return "UnknownPose";
    case ErrorCode::UnknownTemplate: return "UnknownTemplate";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::IncompatibleModelVersion: return "IncompatibleModelVersion";
    case ErrorCode::CorruptModelFile: return "CorruptModelFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownActionType: return "UnknownActionType";
    case ErrorCode::UnknownBuiltin: return "UnknownBuiltin";
    case ErrorCode::ShellSpawnFailure: return "ShellSpawnFailure";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingIndexFile: return "MissingIndexFile";
    case ErrorCode::MalformedSkeletonLine: return "MalformedSkeletonLine";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
/// Parsers attach the 1-based line number of the offending record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(format(code, message, line)), code_(code), line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::optional<std::size_t> line) {
    std::string out(to_string(code));
    if (line) out += " (line " + std::to_string(*line) + ")";
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::optional<std::size_t> line_;
};

}  // namespace gestop
