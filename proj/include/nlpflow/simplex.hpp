#pragma once

#include <cstddef>

#include "nlpflow/linalg.hpp"

namespace nlpflow {

/// min c^T x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  lower <= x <= upper.
/// Every structural variable needs finite bounds.
struct LpProblem {
  linalg::Vector c;
  linalg::Matrix a_eq;
  linalg::Vector b_eq;
  linalg::Matrix a_le;
  linalg::Vector b_le;
  linalg::Vector lower;
  linalg::Vector upper;
};

enum class LpStatus { kOptimal, kInfeasible };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  linalg::Vector x;
  double objective = 0.0;
  std::size_t iterations = 0;
  /// Sum of artificials at the end of phase 1.
  double infeasibility = 0.0;
};

/// Two-phase bounded-variable primal simplex on a dense tableau. Entering and
/// leaving choices follow Bland's rule, so degenerate pivots cannot cycle.
/// Throws InvalidInput for inconsistent shapes or non-finite bounds, and
/// NumericFailure if the iteration cap is reached.
LpSolution solve_lp(const LpProblem& lp);

}  // namespace nlpflow
