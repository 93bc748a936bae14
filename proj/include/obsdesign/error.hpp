#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace obsdesign {

// Every failure the library reports carries one of these codes so the CLI
// can map it to an exit status and a machine-readable error record.
enum class ErrorCode {
  InvalidArgument,
  Io,
  // dataset
  MissingColumn,
  NonBinaryTreatment,
  UnparseableCell,
  EmptyTreatmentArm,
  AllMissingColumn,
  UnknownColumn,
  // propensity
  Separation,
  SingularDesign,
  NotConverged,
  // distance
  LengthMismatch,
  SingularSigma,
  ScoreOutOfRange,
  DegenerateVariance,
  // matchers
  NoControls,
  InvalidK,
  Infeasible,
  EmptySubclassArm,
  EverythingDiscarded,
  // weighting
  DegenerateScore,
  WrongResultKind,
  // diagnostics
  ZeroVariance,
  EmptyGroup,
  // estimation
  NoOutcome,
  EmptyArm,
  TooManyFailures,
  // simbench
  InvalidScenario,
  ZeroInitialBias,
  // cli
  ConfigValidation,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::UnparseableCell: return "UnparseableCell";
    case ErrorCode::EmptyTreatmentArm: return "EmptyTreatmentArm";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::NoControls: return "NoControls";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::EmptySubclassArm: return "EmptySubclassArm";
    case ErrorCode::EverythingDiscarded: return "EverythingDiscarded";
    case ErrorCode::DegenerateScore: return "DegenerateScore";
    case ErrorCode::WrongResultKind: return "WrongResultKind";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::NoOutcome: return "NoOutcome";
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::ZeroInitialBias: return "ZeroInitialBias";
    case ErrorCode::ConfigValidation: return "ConfigValidation";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace obsdesign
