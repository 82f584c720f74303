#pragma once

#include <stdexcept>
#include <string>

namespace mcal {

enum class ErrorCode {
  DimensionMismatch,
  NonFiniteInput,
  InvalidArgument,
  SingularJacobian,
  NoConvergence,
  InfeasibleConstraints,
  RankDeficientConstraints,
  SingularCovariance,
  SingularBlock,
  DegenerateTargets,
  InfeasibleState,
  MalformedHeader,
  NonNumericCell,
  WeightNonPositive,
  InclusionMismatch,
  SchemaError,
  AsymmetricCovariance,
  IoError,
  ConfigError,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception carrying a module-qualified error code. Every failure raised by
/// the library is an `mcal::Error`; the CLI turns it into a JSON error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& message)
      : std::runtime_error(message), code_(code), module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

}  // namespace mcal
