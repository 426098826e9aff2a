#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dln {

enum class ErrorKind {
  // input validation
  RankDeficient,
  DimensionOrder,
  DegenerateSpectrum,
  AssumptionViolation,
  IndexOutOfRange,
  ShapeMismatch,
  NotOrthogonal,
  ProductNotOne,
  SubsetTooLarge,
  OutOfRange,
  TooLarge,
  ConfigInvalid,
  TooFewSnapshots,
  NotConstructedSaddle,
  // numerical failures
  StepUnderflow,
  NonFiniteState,
  InsufficientDecay,
  NotCritical,
  AmbiguousMatch,
  BadConditioning,
  NotGlobalMinimum,
  NonConverged,
  // io
  ParseError,
};

std::string_view to_string(ErrorKind kind);

/// True for kinds caused by bad inputs rather than by the numerics.
bool is_validation_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dln
