#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace celltrack {

enum class ErrorCode {
  DegenerateInput,
  EmptyInput,
  DegenerateComponent,
  SingleClass,
  InvalidProbability,
  TooLarge,
  Infeasible,
  InfeasibleFlow,
  IoFailure,
  BadMask,
  ConfigInvalid,
  FrameMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateComponent: return "DegenerateComponent";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::InfeasibleFlow: return "InfeasibleFlow";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMask: return "BadMask";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace celltrack
