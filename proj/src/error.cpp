#include "hemb/error.hpp"

namespace hemb {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kArity: return "arity error";
    case ErrorKind::kConstraint: return "constraint error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kUndefinedCorrelation: return "undefined correlation";
    case ErrorKind::kEmptyReport: return "empty report";
    case ErrorKind::kNumerical: return "numerical failure";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kInvalidInput:
    case ErrorKind::kNumerical:
      return 4;
    default:
      return 3;
  }
}

}  // namespace hemb
