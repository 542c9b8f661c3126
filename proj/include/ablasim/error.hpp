#pragma once

#include <stdexcept>
#include <string>

namespace ablasim {

/// Base of every exception thrown by the library. The CLI maps any Error
/// that escapes a command to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by numerical solvers when a precondition on the step or the
/// linear solve is violated (stability bound, non-convergence).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace ablasim
