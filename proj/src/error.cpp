#include "pairal/error.hpp"

namespace pairal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "PARSE_ERROR";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kEmptyText: return "EMPTY_TEXT";
    case ErrorCode::kDegenerateEmbedding: return "DEGENERATE_EMBEDDING";
    case ErrorCode::kSingleClass: return "SINGLE_CLASS";
    case ErrorCode::kNanLoss: return "NAN_LOSS";
    case ErrorCode::kDegenerateFeature: return "DEGENERATE_FEATURE";
    case ErrorCode::kEstimatorUndefined: return "ESTIMATOR_UNDEFINED";
    case ErrorCode::kVocabularyTooSmall: return "VOCABULARY_TOO_SMALL";
    case ErrorCode::kCountTooLarge: return "COUNT_TOO_LARGE";
    case ErrorCode::kMissingReference: return "MISSING_REFERENCE";
    case ErrorCode::kCorpusMismatch: return "CORPUS_MISMATCH";
    case ErrorCode::kIo: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace pairal
