#pragma once

#include <stdexcept>
#include <string>

namespace anomap {

/// Library-wide error category. The CLI maps these onto exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kFormat,
  kIo,
  kShape,
  kNumeric,
  kState,
};

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

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace anomap
