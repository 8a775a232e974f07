#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nlpflow/integrate.hpp"
#include "nlpflow/random.hpp"

namespace nlpflow::cli {

/// How the initial point is produced:
///   "v1,v2,..."               explicit vector
///   "sample:lo,hi[;i=v...]"   uniform over [lo, hi]^n, component i (1-based) pinned to v
///   "linspace:a,b"            theta_i = a + (b - a)(i - 1)/(n - 1)
///   "optimum"                 the problem's known optimum
struct InitialPointSpec {
  enum class Kind { kExplicit, kSample, kLinspace, kOptimum };
  Kind kind = Kind::kExplicit;
  std::vector<double> values;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::pair<Index, double>> pinned;  // 0-based

  static InitialPointSpec parse(const std::string& text);
  bool random() const { return kind == Kind::kSample; }
  Vector draw(const NlpProblem& problem, Rng& rng) const;
};

/// "1,2,3;4,5": groups separated by ';', 1-based indices. Empty text gives a
/// single group.
PtsState parse_pts(const std::string& text, Index r);

/// Scalar shorthands expanded to k I and constant vectors, with full matrices
/// optionally overridden from a JSON file holding any of "k_theta", "k_h"
/// (nested arrays) and "k_g" (array).
GainSet make_gains(const NlpProblem& problem, double k_theta, double k_h, double k_g,
                   const std::optional<std::string>& gains_file);

/// Problem source: a builtin name, otherwise a path to a problem file.
NlpProblem load_problem(const std::string& source, std::optional<Index> size);

/// Columns: tau, theta_1..n, pi_e_1..s, pi_i_1..r, kkt_stationarity,
/// ec_violation, iec_violation, lyapunov. Values at round-trip precision.
std::string trajectory_csv(const NlpProblem& problem, const Trajectory& traj);

/// Entry point of the command-line tool. Exit status: 0 on converged or
/// horizon-reached, 1 on usage errors, 2 on input errors, 3 when the solve
/// ends in an error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlpflow::cli
