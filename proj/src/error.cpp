#include "dop/error.hpp"

namespace dop {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::UnknownSubState: return "UnknownSubState";
    case ErrorCode::UnknownArity: return "UnknownArity";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnresolvedNeed: return "UnresolvedNeed";
    case ErrorCode::UnresolvedType: return "UnresolvedType";
    case ErrorCode::DuplicateClass: return "DuplicateClass";
    case ErrorCode::NotInternal: return "NotInternal";
    case ErrorCode::UnknownLeaf: return "UnknownLeaf";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::MissingParameter: return "MissingParameter";
    case ErrorCode::BuildFailure: return "BuildFailure";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::StorageCorrupt: return "StorageCorrupt";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::MalformedTrace: return "MalformedTrace";
    case ErrorCode::InvalidInput: return "InvalidInput";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::vector<std::string> details)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      message_(message),
      details_(std::move(details)) {}

}  // namespace dop
