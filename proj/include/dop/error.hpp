#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dop {

enum class ErrorCode {
  UnknownClass,
  UnknownSubState,
  UnknownArity,
  CycleDetected,
  UnresolvedNeed,
  UnresolvedType,
  DuplicateClass,
  NotInternal,
  UnknownLeaf,
  TypeMismatch,
  MissingParameter,
  BuildFailure,
  NonFiniteInput,
  StorageCorrupt,
  IoFailure,
  FormatVersionMismatch,
  MalformedTrace,
  InvalidInput,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library. `details` carries structured extras:
// the (class, sub-state) cycle path, the list of missing leaf paths, ...
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::vector<std::string> details = {});

  ErrorCode code() const noexcept { return code_; }
  // The message without the error-code prefix carried by what().
  const std::string& message() const noexcept { return message_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::vector<std::string> details_;
};

}  // namespace dop
