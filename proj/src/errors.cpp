#include "nlpflow/errors.hpp"

#include <fmt/format.h>

namespace nlpflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kNumericFailure: return "numeric-failure";
    case ErrorKind::kEvaluation: return "evaluation";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kCycling: return "cycling";
    case ErrorKind::kInfeasibleSubproblem: return "infeasible-subproblem";
    case ErrorKind::kStepFailure: return "step-failure";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message, const std::string& source)
    : Error(ErrorKind::kParse, source.empty() ? fmt::format("{}:{}: {}", line, column, message)
                                              : fmt::format("{}:{}:{}: {}", source, line, column, message)),
      line_(line),
      column_(column),
      message_(message) {}

}  // namespace nlpflow
