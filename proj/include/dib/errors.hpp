#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dib {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on an API call (wrong rank, bad index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Tensor/layer shape mismatch.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Invalid configuration, schema, or command-line input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset file. Row and column are 1-based file coordinates,
// zero when not applicable.
class IngestionError : public Error {
 public:
  IngestionError(const std::string& what, std::size_t row = 0, std::string column = {})
      : Error(format(what, row, column)), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t row, const std::string& column) {
    std::string out = what;
    if (row > 0) out += " (row " + std::to_string(row);
    if (!column.empty()) out += (row > 0 ? ", column '" : " (column '") + column + "'";
    if (row > 0 || !column.empty()) out += ")";
    return out;
  }

  std::size_t row_;
  std::string column_;
};

// Numerical failure during optimization.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step = 0, std::string last_checkpoint = {})
      : Error(what), step_(step), last_checkpoint_(std::move(last_checkpoint)) {}

  std::size_t step() const noexcept { return step_; }
  const std::string& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::size_t step_;
  std::string last_checkpoint_;
};

}  // namespace dib
