#pragma once

#include <stdexcept>
#include <string>

namespace hamlearn {

/// Caller passed arguments that violate a precondition.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problem size exceeds what a dense routine supports.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Numerical failure that should not happen for valid inputs.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reference fidelity was not positive, so a ratio is undefined.
class DegenerateReferenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace hamlearn
