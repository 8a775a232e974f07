#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nlpflow/problem.hpp"

namespace nlpflow {

/// Gains of the flow: K_theta (n x n SPD), K_h (s x s SPD) and the positive
/// per-inequality rates k_g.
struct GainSet {
  Matrix k_theta;
  Matrix k_h;
  Vector k_g;

  /// k_theta * I, k_h * I and a constant k_g vector.
  static GainSet scalar(Index n, Index s, Index r, double k_theta, double k_h, double k_g);
  /// Throws InvalidInput on shape mismatch, asymmetry (> 1e-12 relative),
  /// a non-positive-definite matrix or a non-positive rate.
  void validate(Index n, Index s, Index r) const;
};

/// Priority groups for the inequalities. Groups are enabled in order; a group
/// joins once every constraint of the groups before it satisfies g <= tol,
/// and stays enabled afterwards.
class PtsState {
 public:
  /// One group holding every inequality: everything enforced from the start.
  static PtsState single(Index r);
  /// Groups must partition [0, r) (0-based indices). Throws InvalidInput.
  static PtsState from_groups(std::vector<std::vector<Index>> groups, Index r);

  const std::vector<std::vector<Index>>& groups() const noexcept { return groups_; }
  std::size_t enabled_groups() const noexcept { return enabled_; }
  bool is_enabled(Index constraint) const;
  std::vector<std::size_t> active_group_ids() const;

 private:
  friend PtsState pts_update(const PtsState& state, const EvalPoint& eval, double tol);
  std::vector<std::vector<Index>> groups_;
  std::vector<std::size_t> group_of_;
  std::size_t enabled_ = 0;
};

PtsState pts_update(const PtsState& state, const EvalPoint& eval, double tol);

/// Index sets are 0-based and strictly increasing.
struct WorkingSet {
  std::vector<Index> activated;  // g_i >= -eps_act, PTS-enabled
  std::vector<Index> working;    // inequalities treated as equalities
  std::vector<std::size_t> pts_active_groups;
};

struct RhsResult {
  Vector dtheta;
  Vector pi_e;
  Vector pi_i;  // zero off the working set
  WorkingSet working_set;
  Index stacked_jacobian_rank = 0;
  std::optional<double> lp_gamma;
  std::size_t active_set_changes = 0;
  bool used_fallback = false;
  bool multiplier_warning = false;
};

struct DynamicsConfig {
  double eps_act = 1e-8;
  /// A working-set multiplier below -sign_tol is dropped.
  double sign_tol = 1e-10;
  /// An excluded activated inequality must satisfy dg/dtau + k g <= dyn_tol.
  double dyn_tol = 1e-8;
  double rank_multiplier = 1.0;
  double pts_tol = 1e-6;
  /// Box on |dtheta/dtau|_inf for the feasibility LP.
  double lp_box = 1e3;
  /// The LP certifies a feasible subproblem when gamma <= lp_gamma_tol.
  double lp_gamma_tol = 1e-9;
  /// ||pi||_2 above this raises a warning event.
  double multiplier_bound = 1e6;
};

/// Activated inequalities (g_i >= -eps_act among PTS-enabled groups) and the
/// warm-start candidate: `previous_working` restricted to the activated set,
/// or the whole activated set when there is no previous step.
WorkingSet classify(const EvalPoint& eval, double eps_act, const PtsState& pts,
                    const std::optional<std::vector<Index>>& previous_working = std::nullopt);

/// Feasible-region flow: multipliers from
///   pi = -(A K A^T)^+ A K f_theta,  A = [h_theta; g_theta(W)],
/// dtheta = -K (f_theta + A^T pi). Keeps h and g(W) stationary.
RhsResult rhs_feasible(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws,
                       double rank_multiplier = 1.0);

/// General flow, valid from infeasible points:
///   pi = -(A K A^T)^+ (A K f_theta - [K_h h; K_g g(W)]).
/// With A of full row rank this yields dh/dtau = -K_h h and
/// dg_i/dtau = -k_i g_i on W; otherwise the projected targets.
RhsResult rhs_general(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws,
                      double rank_multiplier = 1.0);

/// Active-set loop over the working set: drop the most negative working
/// multiplier, else add the activated inequality whose required dynamics
/// dg_i/dtau + k_i g_i <= dyn_tol is violated the most; ties go to the
/// smallest index. When the loop repeats a set, exceeds 2r changes, or stops
/// on a set whose own rows cannot meet their dynamics, the feasibility LP
/// runs and a primal active-set solve starts from its direction. Throws
/// InfeasibleSubproblem when the LP reports gamma > lp_gamma_tol, and
/// CyclingError if the primal solve does not terminate either.
RhsResult resolve_working_set(const EvalPoint& eval, const GainSet& gains, const WorkingSet& candidate,
                              const DynamicsConfig& config = {});

struct LpResult {
  double gamma = 0.0;
  Vector direction;
  /// Activated rows left out because their gradient norm is numerically zero.
  std::vector<Index> excluded_rows;
};

/// Auxiliary LP: min gamma s.t. h_theta d + K_h h = 0 and, for each activated
/// row, (a_i d + k_i g_i) / |a_i| <= gamma, with |d|_inf <= box. gamma <= 0
/// certifies a feasible direction subproblem. Throws InfeasibleSubproblem if
/// the equality rows cannot be met inside the box.
LpResult feasibility_lp(const EvalPoint& eval, const GainSet& gains, const std::vector<Index>& activated,
                        double box);

/// Full RHS used by the flow; the same as resolve_working_set.
RhsResult compute_rhs(const EvalPoint& eval, const GainSet& gains, const WorkingSet& candidate,
                      const DynamicsConfig& config = {});

}  // namespace nlpflow
