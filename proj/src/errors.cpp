#include "attrgan/errors.hpp"

namespace attrgan {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyLayout: return "EmptyLayout";
    case ErrorCode::kInvalidBBox: return "InvalidBBox";
    case ErrorCode::kTooManyAttributes: return "TooManyAttributes";
    case ErrorCode::kUnknownIndex: return "UnknownIndex";
    case ErrorCode::kShiftOutOfCanvas: return "ShiftOutOfCanvas";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyObjectList: return "EmptyObjectList";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kDegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::kMissingAnnotationFile: return "MissingAnnotationFile";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kModelNotLoaded: return "ModelNotLoaded";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kTooManyObjects: return "TooManyObjects";
    case ErrorCode::kDuplicateAttribute: return "DuplicateAttribute";
    case ErrorCode::kInvalidCanvas: return "InvalidCanvas";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace attrgan
