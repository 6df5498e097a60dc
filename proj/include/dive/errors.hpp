#pragma once

#include <stdexcept>
#include <string>

namespace dive {

// Root of every error thrown by the toolkit. The CLI maps the three
// families below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shapes, ranges, config).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DegenerateRowError : public ContractError {
 public:
  DegenerateRowError(std::size_t row, const std::string& what)
      : ContractError(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class BatchTooSmallError : public ContractError {
 public:
  using ContractError::ContractError;
};

class UndefinedObjectiveError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Problems with files or datasets handed to us.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateIdError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Training diverged (NaN/Inf loss or parameters).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dive
