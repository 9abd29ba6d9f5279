#pragma once

#include <stdexcept>
#include <string>

namespace planeslam {

enum class ErrorCode {
  kInvalidArgument,
  kDegeneratePlane,
  kBehindCamera,
  kDegenerateCloud,
  kNoLinesFound,
  kParallelLines,
  kVertexExtractionFailed,
  kInsufficientSamples,
  kNotVisible,
  kFactorNotEvaluable,
  kNoFactors,
  kInvalidSpec,
  kNothingVisible,
  kNoMatches,
  kParseError,
  kIoError,
  kConfigError,
};

const char* toString(ErrorCode code);

// Every recoverable failure in the library is reported through this type;
// code() lets callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace planeslam
