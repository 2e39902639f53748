#pragma once

#include <stdexcept>
#include <string>

namespace wfcpl {

enum class ErrorCode {
  DegreeTooHigh,
  NonMonotoneTimes,
  OutOfWindow,
  LayoutMismatch,
  LengthMismatch,
  DimensionChange,
  EmptyHistory,
  RankDeficient,
  MaxIterationsExceeded,
  Empty,
  LinearSolveFailure,
  WrongSide,
  VersionMismatch,
  ConfigMismatch,
  ChannelClosed,
  MalformedFrame,
  NonPositive,
  InvalidConfig,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegreeTooHigh: return "DegreeTooHigh";
    case ErrorCode::NonMonotoneTimes: return "NonMonotoneTimes";
    case ErrorCode::OutOfWindow: return "OutOfWindow";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionChange: return "DimensionChange";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::WrongSide: return "WrongSide";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::ChannelClosed: return "ChannelClosed";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::NonPositive: return "NonPositive";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace wfcpl
