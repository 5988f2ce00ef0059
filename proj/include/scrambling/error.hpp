#pragma once

#include <stdexcept>
#include <string>

namespace scrambling {

/// Base of all library errors. Messages are surfaced verbatim by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or a domain type invariant was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not reach a verdict (e.g. divergence test
/// inside its ambiguity band, bracket expansion failed).
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace scrambling
