#pragma once

#include <stdexcept>
#include <string>

namespace sfm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: malformed files, out-of-range parameters, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: non-finite likelihoods, failed factorizations, singular matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// An iterative procedure did not reach its stopping criterion.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfm
