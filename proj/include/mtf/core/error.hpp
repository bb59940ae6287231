#pragma once

#include <stdexcept>
#include <string>

namespace mtf {

// Base of every error thrown by the library. The CLI maps UserError
// subclasses to exit code 1 and InternalError subclasses to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UserError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes that do not compose.
class ShapeError : public UserError {
 public:
  using UserError::UserError;
};

/// Bad configuration key, value or combination.
class ConfigError : public UserError {
 public:
  using UserError::UserError;
};

/// File system or format failure; messages carry the offending path.
class IoError : public UserError {
 public:
  using UserError::UserError;
};

/// Non-finite values reached an operator or the optimizer.
class NumericError : public InternalError {
 public:
  using InternalError::InternalError;
};

}  // namespace mtf
