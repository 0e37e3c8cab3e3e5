#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attrgan {

enum class ErrorCode {
  kEmptyLayout,
  kInvalidBBox,
  kTooManyAttributes,
  kUnknownIndex,
  kShiftOutOfCanvas,
  kParseError,
  kShapeMismatch,
  kEmptyObjectList,
  kEmptyInput,
  kLengthMismatch,
  kLabelOutOfRange,
  kNonFiniteLoss,
  kDegenerateCovariance,
  kMissingAnnotationFile,
  kSchemaError,
  kIoError,
  kModelNotLoaded,
  kInvalidArgument,
  kTooManyObjects,
  kDuplicateAttribute,
  kInvalidCanvas,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; `code()` is what the service puts on
// the wire.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace attrgan
