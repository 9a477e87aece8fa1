#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace schoolrun {

// Every recoverable failure in the library is reported as an Error carrying one
// of these codes. The CLI serializes the code name into its error JSON.
enum class ErrorCode {
  kMissingFeature,
  kOutOfRange,
  kParseError,
  kUnknownCategory,
  kUnknownRoad,
  kOutsideStudyWindow,
  kInvalidCalendar,
  kNoObservations,
  kEmptyGroup,
  kMissingLayer,
  kConstantColumn,
  kKTooLarge,
  kInsufficientVectors,
  kNoSampledPoints,
  kIndexOutOfRange,
  kNegativeProbability,
  kNonFiniteLikelihood,
  kSeparationDetected,
  kEmptyCategory,
  kNotConverged,
  kUnconvergedFit,
  kSingularCovariance,
  kRankDeficient,
  kPerfectCollinearity,
  kNoSignificantFeatures,
  kTooManyFeatures,
  kNonFiniteModelOutput,
  kModelNotLinear,
  kEmptyInput,
  kDegenerateVariance,
  kSpecInfeasible,
  kInvalidParams,
  kMissingArtifact,
  kArtifactMismatch,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Non-fatal diagnostics (empty neighborhoods, disconnected graphs, clipped
// synthetic outcomes) are collected instead of thrown.
enum class WarningCode {
  kEmptyNeighborhood,
  kDisconnectedNeighborhood,
  kClippingActive,
  kNegativePredictedProbability,
  kCollinearShareDropped,
};

std::string_view warning_code_name(WarningCode code);

struct Warning {
  WarningCode code;
  std::string message;
};

using Warnings = std::vector<Warning>;

}  // namespace schoolrun
