#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kym {

enum class ErrorCode {
  NonDelzant,
  Unbounded,
  UnsupportedGrid,
  ShapeMismatch,
  MissingTrace,
  NotPositiveDefinite,
  NegativeNorm,
  ClassMismatch,
  NotAtHYM,
  PathTooCoarse,
  LeftKaehlerCone,
  SingularJacobian,
  StepUnderflow,
  LeavesCone,
  CorruptState,
  InvalidConfig,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonDelzant: return "NonDelzant";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::UnsupportedGrid: return "UnsupportedGrid";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingTrace: return "MissingTrace";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NegativeNorm: return "NegativeNorm";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::NotAtHYM: return "NotAtHYM";
    case ErrorCode::PathTooCoarse: return "PathTooCoarse";
    case ErrorCode::LeftKaehlerCone: return "LeftKaehlerCone";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::LeavesCone: return "LeavesCone";
    case ErrorCode::CorruptState: return "CorruptState";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg, int node = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code), node_(node) {}

  ErrorCode code() const noexcept { return code_; }
  // offending grid node, -1 when not applicable
  int node() const noexcept { return node_; }

 private:
  ErrorCode code_;
  int node_;
};

}  // namespace kym
