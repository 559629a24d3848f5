#pragma once

#include <stdexcept>
#include <string>

namespace qregress {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array dimensions or lengths do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Index outside its valid range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable (non-finite values, inconsistent state).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine failed.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// Requested mode is not supported by the operation.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples to satisfy a request.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qregress
