#include "wagonline/error.hpp"

namespace wagonline {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidPattern: return "InvalidPattern";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kNonMonotonicFrame: return "NonMonotonicFrame";
    case ErrorCode::kOutOfOrderFrame: return "OutOfOrderFrame";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kBadResponse: return "BadResponse";
    case ErrorCode::kUnavailable: return "Unavailable";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kNoReading: return "NoReading";
    case ErrorCode::kCountMismatchTooLarge: return "CountMismatchTooLarge";
    case ErrorCode::kMissingCrop: return "MissingCrop";
    case ErrorCode::kDuplicateTrainId: return "DuplicateTrainId";
    case ErrorCode::kStorageFailure: return "StorageFailure";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kInvalidCode: return "InvalidCode";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace wagonline
