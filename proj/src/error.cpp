#include "schoolrun/error.hpp"

namespace schoolrun {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFeature: return "MissingFeature";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownCategory: return "UnknownCategory";
    case ErrorCode::kUnknownRoad: return "UnknownRoad";
    case ErrorCode::kOutsideStudyWindow: return "OutsideStudyWindow";
    case ErrorCode::kInvalidCalendar: return "InvalidCalendar";
    case ErrorCode::kNoObservations: return "NoObservations";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kMissingLayer: return "MissingLayer";
    case ErrorCode::kConstantColumn: return "ConstantColumn";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kInsufficientVectors: return "InsufficientVectors";
    case ErrorCode::kNoSampledPoints: return "NoSampledPoints";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kNegativeProbability: return "NegativeProbability";
    case ErrorCode::kNonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::kSeparationDetected: return "SeparationDetected";
    case ErrorCode::kEmptyCategory: return "EmptyCategory";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kUnconvergedFit: return "UnconvergedFit";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kPerfectCollinearity: return "PerfectCollinearity";
    case ErrorCode::kNoSignificantFeatures: return "NoSignificantFeatures";
    case ErrorCode::kTooManyFeatures: return "TooManyFeatures";
    case ErrorCode::kNonFiniteModelOutput: return "NonFiniteModelOutput";
    case ErrorCode::kModelNotLinear: return "ModelNotLinear";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDegenerateVariance: return "DegenerateVariance";
    case ErrorCode::kSpecInfeasible: return "SpecInfeasible";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kArtifactMismatch: return "ArtifactMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view warning_code_name(WarningCode code) {
  switch (code) {
    case WarningCode::kEmptyNeighborhood: return "EmptyNeighborhood";
    case WarningCode::kDisconnectedNeighborhood: return "DisconnectedNeighborhood";
    case WarningCode::kClippingActive: return "ClippingActive";
    case WarningCode::kNegativePredictedProbability: return "NegativePredictedProbability";
    case WarningCode::kCollinearShareDropped: return "CollinearShareDropped";
  }
  return "Unknown";
}

}  // namespace schoolrun
