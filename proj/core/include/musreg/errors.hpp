#pragma once

#include <stdexcept>
#include <string>

namespace musreg {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written. The message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its bytes do not follow the declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inputs are well-formed but violate a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The problem is geometrically degenerate (coincident points, empty support).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace musreg
