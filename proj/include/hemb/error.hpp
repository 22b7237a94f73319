#ifndef HEMB_ERROR_HPP_
#define HEMB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace hemb {

enum class ErrorKind {
  kInvalidInput,   // non-finite or out-of-domain numeric input
  kShape,          // dimension mismatch
  kArity,          // wrong tuple size
  kConstraint,     // ordering / structural constraint violated
  kIndex,          // dangling index
  kCapacity,       // not enough classes or samples to build a batch
  kConfig,         // invalid configuration
  kFormat,         // corrupt or truncated file
  kIo,             // file cannot be opened / written
  kInsufficientData,
  kUndefinedCorrelation,
  kEmptyReport,
  kNumerical,      // non-finite loss or gradient during training
};

const char* to_string(ErrorKind kind);

// Process exit code associated with an error kind: 2 config, 3 data, 4 numerical.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace hemb

#endif  // HEMB_ERROR_HPP_
