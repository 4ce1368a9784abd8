#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexagent {

enum class ErrorCode {
    kInvalidArgument,
    kUnknownViolation,
    kInvalidValue,
    kUnrecognizedUrl,
    kExtractionFailed,
    kExtractionUnparseable,
    kDuplicateCaseId,
    kMalformedDocument,
    kProviderUnavailable,
    kProviderTimeout,
    kProviderRejected,
    kDimensionMismatch,
    kZeroVector,
    kProfileMismatch,
    kStoreUnavailable,
    kScriptExhausted,
    kEmptyQueryVector,
    kCaseNotIndexed,
    kUngroundedAnswer,
    kStorageUnavailable,
    kNotFound,
    kConflict,
    kConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` carries the failure kind.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// Timeouts and 5xx-class provider failures may be retried.
    bool retryable() const noexcept {
        return code_ == ErrorCode::kProviderUnavailable || code_ == ErrorCode::kProviderTimeout;
    }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
        case ErrorCode::kUnknownViolation: return "UnknownViolation";
        case ErrorCode::kInvalidValue: return "InvalidValue";
        case ErrorCode::kUnrecognizedUrl: return "UnrecognizedUrl";
        case ErrorCode::kExtractionFailed: return "ExtractionFailed";
        case ErrorCode::kExtractionUnparseable: return "ExtractionUnparseable";
        case ErrorCode::kDuplicateCaseId: return "DuplicateCaseId";
        case ErrorCode::kMalformedDocument: return "MalformedDocument";
        case ErrorCode::kProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::kProviderTimeout: return "ProviderTimeout";
        case ErrorCode::kProviderRejected: return "ProviderRejected";
        case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
        case ErrorCode::kZeroVector: return "ZeroVector";
        case ErrorCode::kProfileMismatch: return "ProfileMismatch";
        case ErrorCode::kStoreUnavailable: return "StoreUnavailable";
        case ErrorCode::kScriptExhausted: return "ScriptExhausted";
        case ErrorCode::kEmptyQueryVector: return "EmptyQueryVector";
        case ErrorCode::kCaseNotIndexed: return "CaseNotIndexed";
        case ErrorCode::kUngroundedAnswer: return "UngroundedAnswer";
        case ErrorCode::kStorageUnavailable: return "StorageUnavailable";
        case ErrorCode::kNotFound: return "NotFound";
        case ErrorCode::kConflict: return "Conflict";
        case ErrorCode::kConfig: return "Config";
    }
    return "Unknown";
}

}  // namespace lexagent
