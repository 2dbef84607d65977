#pragma once

#include <stdexcept>
#include <string>

namespace mtlsar {

/// Broad failure categories. The C API and the CLI map these onto status
/// and exit codes.
enum class ErrorKind {
  invalid_argument,  // bad shapes, bad configuration, contract violations
  data,              // malformed or inconsistent dataset content
  io,                // filesystem failures
  verification,      // a numerical self-check did not pass
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorKind::invalid_argument, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(what);
}

}  // namespace mtlsar
