#pragma once

#include <stdexcept>
#include <string>

namespace khid {

// Base for every recoverable failure raised by the library. The CLI maps
// these to exit code 2 (data error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class StageDependencyError : public Error {
 public:
  using Error::Error;
};

// Training labels hold a single class.
class DegenerateLabelError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace khid
