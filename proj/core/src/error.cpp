#include "tagan/error.hpp"

namespace tagan {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptySignal: return "EmptySignal";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNonScalarRoot: return "NonScalarRoot";
    case ErrorKind::kNoData: return "NoData";
    case ErrorKind::kTooShort: return "TooShort";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kEmptyTrack: return "EmptyTrack";
    case ErrorKind::kDegenerateReference: return "DegenerateReference";
    case ErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::kCorruptHeader: return "CorruptHeader";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kOverlapError: return "OverlapError";
    case ErrorKind::kBadRatios: return "BadRatios";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kUnknownVariant: return "UnknownVariant";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace tagan
