#pragma once

#include <stdexcept>
#include <string>

namespace artsig {

// Base for every error raised by the library. The CLI maps subclasses to
// process exit codes (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, violated preconditions, invalid configuration or vocabulary.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input bytes do not follow the file format (magic, version, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but its contents are unusable (NaN, zero rows, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A stratified split cannot satisfy its per-artist constraints.
class SplitError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitData = 3;

inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return kExitValidation;
  return kExitData;
}

}  // namespace artsig
