#pragma once

#include <stdexcept>
#include <string>

namespace slqr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: wrong dimensions, non-finite entries, indefinite weights, bad
// configuration fields.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

// An iterative routine ran out of iterations or failed numerically.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace slqr
