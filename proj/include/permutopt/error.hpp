#pragma once

#include <stdexcept>
#include <string>

namespace permutopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value became NaN/Inf, or a numeric precondition failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The input carries no usable information (zero norm, zero variance, ...).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. The message names the location (line, row/col or field).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An optimizer or problem name did not resolve.
class RegistryError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

}  // namespace permutopt
