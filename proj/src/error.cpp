#include "kdehmm/error.hpp"

namespace kdehmm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kDegenerateSample: return "DegenerateSample";
    case ErrorKind::kSequenceTooShort: return "SequenceTooShort";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kEmptyState: return "EmptyState";
    case ErrorKind::kNoCycleStructure: return "NoCycleStructure";
    case ErrorKind::kRankDeficient: return "RankDeficient";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kConfig: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace kdehmm
