#pragma once

#include <stdexcept>
#include <string>

namespace diffrank {

// Base of every error the library raises. Subclasses carry the category the
// CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Zero variance (or constant input) where a correlation or fit needs spread.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A pair-formation strategy cannot be satisfied for the requested batch.
class InfeasibleStrategyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace diffrank
