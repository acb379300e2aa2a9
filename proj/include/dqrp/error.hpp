#pragma once

#include <stdexcept>
#include <string>

namespace dqrp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad shape, m > n, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between a network, an input, or a model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by the caller (empty batch, wrong network kind, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based data row and column when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row = -1, long column = -1)
      : Error(what), row_(row), column_(column) {}

  long row() const noexcept { return row_; }
  long column() const noexcept { return column_; }

 private:
  long row_;
  long column_;
};

}  // namespace dqrp
