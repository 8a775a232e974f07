#pragma once

#include <string_view>
#include <vector>

#include "nlpflow/dynamics.hpp"

namespace nlpflow {

/// First-order optimality residuals at one state.
struct KktReport {
  double stationarity = 0.0;     // |f_theta + h_theta^T pi_E + g_theta^T pi_I|_2
  double ec_violation = 0.0;     // |h|_2
  double iec_violation = 0.0;    // |max(g, 0)|_2
  double complementarity = 0.0;  // max_i |pi_I,i g_i| over every inequality
  double sign_violation = 0.0;   // max(0, -min over the working set of pi_I,i)
};

struct ToleranceSet {
  double stationarity = 1e-6;
  double ec_violation = 1e-8;
  double iec_violation = 1e-8;
  double complementarity = 1e-8;
  double sign = 1e-9;
};

enum class Verdict { kContinue, kConverged, kHorizonReached };

std::string_view to_string(Verdict v);

KktReport kkt_report(const EvalPoint& eval, const RhsResult& rhs);

bool within(const KktReport& report, const ToleranceSet& tol);

/// Inequalities with g_i >= 0 (violated or exactly active).
std::vector<Index> nonnegative_set(const EvalPoint& eval);

/// V = |h|_2 + |g(I)|_2 + c1 f. Diagnostic only. Throws InvalidInput if c1 <= 0.
double lyapunov_value(const EvalPoint& eval, const std::vector<Index>& activated, double c1);

/// Converged when every residual is within tolerance; otherwise horizon
/// reached once tau >= t_end; otherwise continue.
Verdict decide(const KktReport& report, const ToleranceSet& tol, double tau, double t_end);

}  // namespace nlpflow
