#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pairal {

enum class ErrorCode {
  kParse,
  kInvalidArgument,
  kEmptyText,
  kDegenerateEmbedding,
  kSingleClass,
  kNanLoss,
  kDegenerateFeature,
  kEstimatorUndefined,
  kVocabularyTooSmall,
  kCountTooLarge,
  kMissingReference,
  kCorpusMismatch,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All fatal module errors surface as this exception; the code identifies the
// failure class so callers (and tests) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pairal
