#pragma once

#include <stdexcept>
#include <string>

namespace aberforge {

// Base for every failure raised by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside an operation's mathematical domain (conic sag, wavelength band, DoF denominator).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Iterative solver failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Every traced ray died before reaching the image plane.
class EmptySpotError : public Error {
 public:
  using Error::Error;
};

// Mismatched dimensions between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace aberforge
