#pragma once

#include <stdexcept>
#include <string>

namespace covhmm {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (bad dimensions, out-of-range
// argument). Indicates a programming or usage error.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The data itself cannot be processed: empty sequences, single-class sets,
// malformed files, likelihoods that collapse to zero.
class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateLikelihood : public DataError {
 public:
  using DataError::DataError;
};

class SingleClassError : public DataError {
 public:
  using DataError::DataError;
};

class UndefinedMetric : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace covhmm
