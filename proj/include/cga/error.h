#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cga {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a data-model invariant (bad labels, leakage, etc).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input line. `line()` is 1-based, 0 when unknown.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A pair_id that does not link exactly two conversations of opposite label.
class PairingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Any attempt to expose or score the label-bearing final utterance.
class LeakageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Failures while talking to an external forecaster process.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace cga
