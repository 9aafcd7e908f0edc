#pragma once

#include <stdexcept>
#include <string>

namespace cmnet {

// Error taxonomy used across the library. Everything derives from Error so
// callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up (mismatched dims, invalid conv geometry, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, missing oracle data, bad argument.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or wrong-magic file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inconsistent persistent state (optimizer moments vs parameters, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

// Semantically invalid values (alpha outside [0,1], ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmnet
