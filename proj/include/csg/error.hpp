#pragma once

#include <stdexcept>
#include <string>

namespace csg {

enum class ErrorKind {
  Contract,       // precondition / API misuse
  Dimension,      // shape mismatch
  NumericDomain,  // non-finite values, division by ~0
  Config,         // bad experiment configuration
  Io,             // file read/write failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace csg

#define CSG_CHECK(cond, kind, msg)                                  \
  do {                                                              \
    if (!(cond)) ::csg::raise(::csg::ErrorKind::kind, (msg));       \
  } while (0)
