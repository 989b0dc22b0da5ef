#pragma once

#include <stdexcept>
#include <string>

namespace mt6 {

// Coarse failure categories. They map one-to-one onto the C API status codes
// and onto the category word the CLI prints on failure.
enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kFormat,
  kNumeric,
  kState,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void Require(bool cond, const std::string& what) {
  if (!cond) Fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace mt6
