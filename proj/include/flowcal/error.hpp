#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowcal {

// Base of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic / unknown version in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally valid header but inconsistent or truncated payload.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Text-format parse failure; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A domain invariant does not hold (degenerate dimension, zero-norm row,
// constant correlation input, dimension mismatch, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowcal
