#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srlssvm {

/// Violated precondition on caller-supplied data or parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Breakdown inside a factorization or linear solve.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text or model file. `location` is a line number for text
/// datasets and a byte offset for model files.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : std::runtime_error(what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srlssvm
