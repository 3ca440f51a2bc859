#pragma once

#include <stdexcept>
#include <string>

namespace nvb {

// Malformed or inconsistent arguments (dimension mismatch, degenerate prior, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of the operation, e.g. |u| > 1.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Requested value cannot be reached by the prior (mean outside the support hull).
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Problem too large for an exact method.
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nvb
