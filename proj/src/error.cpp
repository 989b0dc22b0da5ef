#include "mt6/error.hpp"

namespace mt6 {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kState: return "state";
  }
  return "internal";
}

}  // namespace mt6
