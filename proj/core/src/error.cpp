#include "corpgnn/error.hpp"

namespace corpgnn {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kDuplicateEnterpriseYear: return "DuplicateEnterpriseYear";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kEmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorCode::kLevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::kClassMissingInTrain: return "ClassMissingInTrain";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInsufficientHistory: return "InsufficientHistory";
    case ErrorCode::kUnknownFormat: return "UnknownFormat";
    case ErrorCode::kBadGraph: return "BadGraph";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBadSegmentId: return "BadSegmentId";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kZeroProjection: return "ZeroProjection";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kDegenerateClass: return "DegenerateClass";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFinite:
    case ErrorCode::kZeroProjection:
    case ErrorCode::kNonFiniteGradient:
    case ErrorCode::kDiverged:
      return ErrorCategory::kNumerical;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownFormat:
      return ErrorCategory::kUsage;
    default:
      return ErrorCategory::kData;
  }
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code) {}

}  // namespace corpgnn
