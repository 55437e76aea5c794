#pragma once

#include <stdexcept>
#include <string>

namespace hrctc {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree at an op boundary.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf was produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or configuration value.
class ParseError : public Error {
 public:
  using Error::Error;
};

// No CTC alignment exists for the given (frames, labels) pair.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Precondition violated by the caller (empty input, bad range, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace hrctc
