#pragma once

#include <stdexcept>
#include <string>

namespace neon {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t pos)
      : Error(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
  std::size_t position;
};

struct EvalError : Error {
  EvalError(const std::string& msg, int index) : Error(msg), var_index(index) {}
  int var_index;
};

struct PathError : Error {
  using Error::Error;
};

struct BudgetError : Error {
  BudgetError(const std::string& msg, int budget_) : Error(msg), budget(budget_) {}
  int budget;
};

struct IoError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace neon
