#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "nlpflow/problem.hpp"

namespace nlpflow {

struct ParseOptions {
  std::string name = "file";
  /// Finite-difference validation of the dual-number derivatives.
  bool validate_derivatives = true;
  std::size_t validation_points = 5;
  std::uint64_t validation_seed = 0x5eed;
  double validation_tolerance = 1e-5;
};

/// Parses the line-oriented problem format:
///
///   # comment
///   var 3                      theta in R^3, referenced as x1..x3
///   min -x1*x2 + sin(x3)
///   ineq x1^2 + x2^2 - 1       expr <= 0
///   ineq 0.5 <= x1 <= 1.5      expanded to x1 - 1.5 <= 0 and 0.5 - x1 <= 0
///   ineq x1 >= x2              x2 - x1 <= 0
///   eq x1 + x2 + x3 - 3        expr = 0   (also: eq lhs = rhs)
///
/// Operators + - * / and ^ (constant exponent only); functions sin, cos,
/// exp, log, sqrt; the constant pi. Derivatives come from forward-mode dual
/// numbers. Throws ParseError with 1-based line and column.
NlpProblem parse_problem(std::string_view text, const ParseOptions& options = {});

/// Canonical text for a DSL-backed problem: fully parenthesised, literals at
/// round-trip precision, two-sided constraints already expanded. Throws
/// InvalidInput for problems that were not produced by parse_problem.
std::string serialize_problem(const NlpProblem& problem);

/// Reads a file and parses it; the problem is named after the file stem.
NlpProblem load_problem_file(const std::string& path, ParseOptions options = {});

}  // namespace nlpflow
