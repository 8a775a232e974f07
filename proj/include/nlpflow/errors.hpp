#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nlpflow {

enum class ErrorKind {
  kInvalidInput,
  kNumericFailure,
  kEvaluation,
  kLookup,
  kParse,
  kCycling,
  kInfeasibleSubproblem,
  kStepFailure,
  kIo,
};

std::string_view to_string(ErrorKind kind);

/// Base of every error raised by the library. `kind()` is the stable,
/// machine-readable category surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class EvaluationError : public Error {
 public:
  // component is "f", "g" or "h"; index is 0-based within that vector.
  EvaluationError(std::string component, std::size_t index, const std::string& what)
      : Error(ErrorKind::kEvaluation, what), component_(std::move(component)), index_(index) {}
  const std::string& component() const noexcept { return component_; }
  std::size_t index() const noexcept { return index_; }

 private:
  std::string component_;
  std::size_t index_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message, const std::string& source = {});
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

class CyclingError : public Error {
 public:
  CyclingError(std::vector<std::size_t> indices, const std::string& what)
      : Error(ErrorKind::kCycling, what), indices_(std::move(indices)) {}
  /// Working-set indices (0-based) that kept oscillating.
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

 private:
  std::vector<std::size_t> indices_;
};

}  // namespace nlpflow
