#pragma once

#include <stdexcept>
#include <string>

namespace ssnls {

enum class ErrorKind {
  Shape,           // dimension mismatch between operands
  Domain,          // value outside the domain of a penalty or operator
  Config,          // invalid parameter or configuration
  Degenerate,      // zero or otherwise unusable dictionary column
  NonConvergence,  // iteration cap reached
  Stall,           // step-size search failed to find an acceptable c_n
  Io,              // file could not be read, written or parsed
};

const char* to_string(ErrorKind kind) noexcept;

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

}  // namespace ssnls
