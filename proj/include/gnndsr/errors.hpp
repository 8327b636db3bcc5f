#pragma once

#include <stdexcept>
#include <string>

namespace gnndsr {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up for the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

// An argument is outside the operation's domain (rates, empty inputs, ...).
struct DomainError : Error {
  using Error::Error;
};

// A raw input file could not be parsed.
struct ParseError : Error {
  using Error::Error;
};

// Parsed data violates a dataset or configuration contract.
struct ValidationError : Error {
  using Error::Error;
};

// An entity index is out of range.
struct LookupError : Error {
  using Error::Error;
};

// A file could not be read or written.
struct IoError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace gnndsr
