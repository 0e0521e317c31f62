#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lassoprune {

enum class ErrorCode {
  // interchange
  BadMagic,
  DimsOverflow,
  TruncatedData,
  UnknownDtype,
  InvalidTensor,
  IoFailure,
  ParseError,
  DanglingPredecessor,
  CycleDetected,
  ChannelMismatchAtJunction,
  // gram
  DimensionMismatch,
  NonFiniteInput,
  IndexOutOfRange,
  NonSquareInput,
  BatchSizeMismatch,
  InvalidConfig,
  // structure
  LengthMismatch,
  // solver
  NonFiniteEncountered,
  // budget
  KeptExceedsDeclared,
  InconsistentMask,
  TargetExceedsColumns,
  // maskplan
  EmptyMask,
  MissingSelection,
  IrreconcilableShortcut,
  // cli
  MissingInput,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::DimsOverflow: return "dims-overflow";
    case ErrorCode::TruncatedData: return "truncated-data";
    case ErrorCode::UnknownDtype: return "unknown-dtype";
    case ErrorCode::InvalidTensor: return "invalid-tensor";
    case ErrorCode::IoFailure: return "io-failure";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::DanglingPredecessor: return "dangling-predecessor";
    case ErrorCode::CycleDetected: return "cycle-detected";
    case ErrorCode::ChannelMismatchAtJunction: return "channel-mismatch-at-junction";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonFiniteInput: return "non-finite-input";
    case ErrorCode::IndexOutOfRange: return "index-out-of-range";
    case ErrorCode::NonSquareInput: return "non-square-input";
    case ErrorCode::BatchSizeMismatch: return "batch-size-mismatch";
    case ErrorCode::InvalidConfig: return "invalid-config";
    case ErrorCode::LengthMismatch: return "length-mismatch";
    case ErrorCode::NonFiniteEncountered: return "non-finite-encountered";
    case ErrorCode::KeptExceedsDeclared: return "kept-exceeds-declared";
    case ErrorCode::InconsistentMask: return "inconsistent-mask";
    case ErrorCode::TargetExceedsColumns: return "target-exceeds-columns";
    case ErrorCode::EmptyMask: return "empty-mask";
    case ErrorCode::MissingSelection: return "missing-selection";
    case ErrorCode::IrreconcilableShortcut: return "irreconcilable-identity-shortcut";
    case ErrorCode::MissingInput: return "missing-input";
  }
  return "unknown";
}

}  // namespace lassoprune
