#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tagan {

enum class ErrorKind {
  kEmptySignal,
  kShapeMismatch,
  kNonScalarRoot,
  kNoData,
  kTooShort,
  kNonFiniteLoss,
  kLengthMismatch,
  kEmptyTrack,
  kDegenerateReference,
  kUnsupportedFormat,
  kCorruptHeader,
  kParseError,
  kOverlapError,
  kBadRatios,
  kIoError,
  kUnknownVariant,
  kConfigError,
};

std::string_view ErrorKindName(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tagan
