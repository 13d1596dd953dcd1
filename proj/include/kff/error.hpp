#pragma once

#include <stdexcept>
#include <string>

namespace kff {

// Base for every failure the engine reports. Callers that only care about
// "something went wrong" catch this; tests match the concrete subclass.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Raised when fusion receives a fission outcome produced against a different
// pool version.
class ConsistencyError : public Error {
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
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Certificate or theorem hypotheses do not hold.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

}  // namespace kff
