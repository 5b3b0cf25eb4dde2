#pragma once

#include <stdexcept>
#include <string>

namespace macrok {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  parse_error = 2,
  contract_violation = 3,
  search_space = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ExitCode::parse_error, what) {}
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ExitCode::parse_error, source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Numeric or contract violations (bad budgets, shapes, marginals, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ExitCode::contract_violation, what) {}
};

class InvalidBudget : public ContractError {
  using ContractError::ContractError;
};
class InvalidInput : public ContractError {
  using ContractError::ContractError;
};
class ShapeError : public ContractError {
  using ContractError::ContractError;
};
class BudgetViolation : public ContractError {
  using ContractError::ContractError;
};
class InvalidMarginals : public ContractError {
  using ContractError::ContractError;
};
class InvalidClassifier : public ContractError {
  using ContractError::ContractError;
};
class InvalidDistribution : public ContractError {
  using ContractError::ContractError;
};
class InvalidWeights : public ContractError {
  using ContractError::ContractError;
};
class InvalidSplit : public ContractError {
  using ContractError::ContractError;
};
class UnsupportedMetric : public ContractError {
  using ContractError::ContractError;
};
class NotABinaryMeasure : public ContractError {
  using ContractError::ContractError;
};

class SearchSpaceTooLarge : public Error {
 public:
  explicit SearchSpaceTooLarge(const std::string& what) : Error(ExitCode::search_space, what) {}
};

}  // namespace macrok
