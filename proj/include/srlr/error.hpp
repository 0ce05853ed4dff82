#pragma once

#include <stdexcept>
#include <string>

namespace srlr {

enum class ErrorCode {
  IncompleteTree,
  TrailingTokens,
  UnknownToken,
  UnboundConstant,
  DelayOutOfRange,
  ChannelMismatch,
  DegenerateTarget,
  OptimizerDiverged,
  ImproperTransferFunction,
  DegenerateDenominator,
  UnstableStep,
  NonConvergent,
  InsufficientBoundaryPoints,
  SpecInvalid,
  SchemaMismatch,
  IoFailure,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace srlr
