#pragma once

#include <stdexcept>
#include <string>

namespace sphdiff {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A file on disk is malformed (bad magic, truncated payload, wrong dims).
class FormatError : public Error {
 public:
  using Error::Error;
};

// An experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace sphdiff
