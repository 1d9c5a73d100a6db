#pragma once

#include <stdexcept>
#include <string>

namespace vtf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. The message names both operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad user input (flags, config values, empty datasets).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Anything wrong with on-disk data. Subclasses let callers tell the cases apart.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptFileError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaMismatchError : public DataError {
 public:
  using DataError::DataError;
};

/// Structured-text file that fails to parse or validate; carries a line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

}  // namespace vtf
