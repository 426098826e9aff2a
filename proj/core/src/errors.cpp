#include "dln/errors.hpp"

namespace dln {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DimensionOrder: return "DimensionOrder";
    case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorKind::AssumptionViolation: return "AssumptionViolation";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotOrthogonal: return "NotOrthogonal";
    case ErrorKind::ProductNotOne: return "ProductNotOne";
    case ErrorKind::SubsetTooLarge: return "SubsetTooLarge";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::TooFewSnapshots: return "TooFewSnapshots";
    case ErrorKind::NotConstructedSaddle: return "NotConstructedSaddle";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::InsufficientDecay: return "InsufficientDecay";
    case ErrorKind::NotCritical: return "NotCritical";
    case ErrorKind::AmbiguousMatch: return "AmbiguousMatch";
    case ErrorKind::BadConditioning: return "BadConditioning";
    case ErrorKind::NotGlobalMinimum: return "NotGlobalMinimum";
    case ErrorKind::NonConverged: return "NonConverged";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::StepUnderflow:
    case ErrorKind::NonFiniteState:
    case ErrorKind::InsufficientDecay:
    case ErrorKind::NotCritical:
    case ErrorKind::AmbiguousMatch:
    case ErrorKind::BadConditioning:
    case ErrorKind::NotGlobalMinimum:
    case ErrorKind::NonConverged:
      return false;
    default:
      return true;
  }
}

}  // namespace dln
