#include "planeslam/error.hpp"

namespace planeslam {

const char* toString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegeneratePlane: return "DegeneratePlane";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kDegenerateCloud: return "DegenerateCloud";
    case ErrorCode::kNoLinesFound: return "NoLinesFound";
    case ErrorCode::kParallelLines: return "ParallelLines";
    case ErrorCode::kVertexExtractionFailed: return "VertexExtractionFailed";
    case ErrorCode::kInsufficientSamples: return "InsufficientSamples";
    case ErrorCode::kNotVisible: return "NotVisible";
    case ErrorCode::kFactorNotEvaluable: return "FactorNotEvaluable";
    case ErrorCode::kNoFactors: return "NoFactors";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kNothingVisible: return "NothingVisible";
    case ErrorCode::kNoMatches: return "NoMatches";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(toString(code)) + ": " + message), code_(code) {}

}  // namespace planeslam
