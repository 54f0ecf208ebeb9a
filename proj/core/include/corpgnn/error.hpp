#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace corpgnn {

enum class ErrorCode {
  // dataset
  kMissingColumn,
  kNonNumericCell,
  kDuplicateEnterpriseYear,
  kZeroVariance,
  kEmptyAfterFilter,
  kLevelOutOfRange,
  kClassMissingInTrain,
  kIoError,
  // graph mapping
  kInsufficientHistory,
  kUnknownFormat,
  kBadGraph,
  // diffcore / model
  kShapeMismatch,
  kBadSegmentId,
  kLabelOutOfRange,
  kNonFinite,
  kZeroProjection,
  // training
  kNonFiniteGradient,
  kDiverged,
  kFormatVersionMismatch,
  kCorruptCheckpoint,
  // metrics
  kDegenerateClass,
  // generic
  kInvalidArgument,
};

/// Coarse grouping used for process exit codes.
enum class ErrorCategory { kUsage, kData, kNumerical };

std::string_view error_code_name(ErrorCode code);
ErrorCategory error_category(ErrorCode code);

/// Single exception type carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace corpgnn
