#include "nlpflow/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "nlpflow/errors.hpp"
#include "nlpflow/simplex.hpp"

namespace nlpflow {

namespace {

std::vector<std::size_t> to_size_t(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

// Rows [h_theta; g_theta(W)] and targets [K_h h; k_g g(W)].
struct Stacked {
  Matrix a;
  Vector target;
};

Stacked stack_constraints(const EvalPoint& eval, const GainSet& gains, const std::vector<Index>& working) {
  const Index n = eval.theta.size();
  const Index s = eval.h.size();
  const auto w = static_cast<Index>(working.size());
  Stacked out{Matrix(s + w, n), Vector(s + w)};
  if (s > 0) {
    out.a.topRows(s) = eval.h_jac;
    out.target.head(s) = gains.k_h * eval.h;
  }
  for (Index k = 0; k < w; ++k) {
    const Index i = working[static_cast<std::size_t>(k)];
    out.a.row(s + k) = eval.g_jac.row(i);
    out.target(s + k) = gains.k_g(i) * eval.g(i);
  }
  return out;
}

RhsResult assemble(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws, double rank_multiplier,
                   bool with_targets) {
  const Index s = eval.h.size();
  const Index r = eval.g.size();
  RhsResult out;
  out.working_set = ws;
  out.pi_e = Vector::Zero(s);
  out.pi_i = Vector::Zero(r);

  const Stacked st = stack_constraints(eval, gains, ws.working);
  if (st.a.rows() == 0) {
    out.dtheta = -(gains.k_theta * eval.f_grad);
    return out;
  }

  const Matrix kat = gains.k_theta * st.a.transpose();
  Matrix gram = st.a * kat;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Vector rhs = st.a * (gains.k_theta * eval.f_grad);
  if (with_targets) rhs -= st.target;

  const linalg::PinvFactorization fac = linalg::svd(gram, rank_multiplier);
  const Vector pi = -(fac.pseudo_inverse() * rhs);
  out.stacked_jacobian_rank = fac.numerical_rank;
  out.dtheta = -(gains.k_theta * eval.f_grad) - kat * pi;
  if (!out.dtheta.allFinite() || !pi.allFinite()) {
    throw Error(ErrorKind::kNumericFailure, "multiplier computation produced non-finite values");
  }
  out.pi_e = pi.head(s);
  for (std::size_t k = 0; k < ws.working.size(); ++k) out.pi_i(ws.working[k]) = pi(s + static_cast<Index>(k));
  return out;
}

// Largest dg_i/dtau + k_i g_i over activated indices outside the working set.
// Returns -1 when every such index is within tol.
Index worst_dynamics_violator(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws,
                              const Vector& dtheta, double tol) {
  Index worst = -1;
  double worst_value = tol;
  for (Index i : ws.activated) {
    if (std::binary_search(ws.working.begin(), ws.working.end(), i)) continue;
    const double v = eval.g_jac.row(i).dot(dtheta) + gains.k_g(i) * eval.g(i);
    if (v > worst_value) {
      worst_value = v;
      worst = i;
    }
  }
  return worst;
}

// Most negative working multiplier below -tol, or -1.
Index most_negative(const RhsResult& res, double tol) {
  Index worst = -1;
  double worst_value = -tol;
  for (Index i : res.working_set.working) {
    if (res.pi_i(i) < worst_value) {
      worst_value = res.pi_i(i);
      worst = i;
    }
  }
  return worst;
}

void insert_sorted(std::vector<Index>& v, Index i) { v.insert(std::lower_bound(v.begin(), v.end(), i), i); }
void erase_sorted(std::vector<Index>& v, Index i) { v.erase(std::lower_bound(v.begin(), v.end(), i)); }

void flag_multipliers(RhsResult& res, double bound) {
  const double norm = std::sqrt(res.pi_e.squaredNorm() + res.pi_i.squaredNorm());
  res.multiplier_warning = norm > bound;
}

// Rows of the stacked matrix that are linearly independent, picked greedily
// in order among `candidates` on top of the equality rows.
bool independent_of(const Matrix& base, const Vector& row) {
  if (base.rows() == 0) return row.norm() > 0.0;
  Matrix stacked(base.rows() + 1, base.cols());
  stacked << base, row.transpose();
  const Index before = linalg::svd(base).numerical_rank;
  return linalg::svd(stacked).numerical_rank > before;
}

// Primal active-set solve of the direction QP
//   min (d + K f)^T K^{-1} (d + K f)
//   s.t. h_theta d = -K_h h,  a_i d <= -k_i g_i  (i activated),
// started from a feasible direction d0. Each iterate keeps feasibility; the
// step toward the equality-constrained minimizer of the current working set
// is cut by the first blocking row.
RhsResult primal_active_set(const EvalPoint& eval, const GainSet& gains, const WorkingSet& base, Vector d,
                            const DynamicsConfig& config) {
  const Index r = eval.g.size();
  std::vector<Index> working;
  Matrix rows = eval.h_jac;
  for (Index i : base.activated) {
    const double slack = -gains.k_g(i) * eval.g(i) - eval.g_jac.row(i).dot(d);
    const double scale = 1.0 + eval.g_jac.row(i).norm() * d.lpNorm<Eigen::Infinity>();
    if (slack > 1e-9 * scale) continue;
    const Vector row = eval.g_jac.row(i).transpose();
    if (!independent_of(rows, row)) continue;
    rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
    rows.row(rows.rows() - 1) = row.transpose();
    working.push_back(i);
  }

  const std::size_t cap = 10 * static_cast<std::size_t>(r) + 50;
  for (std::size_t iter = 0; iter < cap; ++iter) {
    WorkingSet ws{base.activated, working, base.pts_active_groups};
    RhsResult res = assemble(eval, gains, ws, config.rank_multiplier, true);
    res.active_set_changes = iter;
    const Vector p = res.dtheta - d;
    if (p.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + d.lpNorm<Eigen::Infinity>())) {
      const Index drop = most_negative(res, config.sign_tol);
      if (drop < 0) return res;
      erase_sorted(working, drop);
      continue;
    }
    double alpha = 1.0;
    Index blocking = -1;
    for (Index i : base.activated) {
      if (std::binary_search(working.begin(), working.end(), i)) continue;
      const double ap = eval.g_jac.row(i).dot(p);
      if (ap <= 1e-14) continue;
      const double slack = std::max(0.0, -gains.k_g(i) * eval.g(i) - eval.g_jac.row(i).dot(d));
      const double a = slack / ap;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    d += alpha * p;
    if (blocking >= 0) {
      insert_sorted(working, blocking);
    } else {
      // Full step: d is the working-set minimizer; check signs next round.
      d = res.dtheta;
    }
  }
  throw CyclingError(to_size_t(working), "primal active-set fallback did not terminate");
}

}  // namespace

GainSet GainSet::scalar(Index n, Index s, Index r, double k_theta, double k_h, double k_g) {
  return {k_theta * Matrix::Identity(n, n), k_h * Matrix::Identity(s, s), Vector::Constant(r, k_g)};
}

void GainSet::validate(Index n, Index s, Index r) const {
  if (k_theta.rows() != n || k_theta.cols() != n) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("K_theta must be {}x{}", n, n));
  }
  if (k_h.rows() != s || k_h.cols() != s) throw Error(ErrorKind::kInvalidInput, fmt::format("K_h must be {}x{}", s, s));
  if (k_g.size() != r) throw Error(ErrorKind::kInvalidInput, fmt::format("k_g must have {} entries", r));
  if (!linalg::is_spd(k_theta)) throw Error(ErrorKind::kInvalidInput, "K_theta must be symmetric positive-definite");
  if (s > 0 && !linalg::is_spd(k_h)) throw Error(ErrorKind::kInvalidInput, "K_h must be symmetric positive-definite");
  for (Index i = 0; i < r; ++i) {
    if (!(k_g(i) > 0.0) || !std::isfinite(k_g(i))) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("k_g[{}] must be positive and finite", i + 1));
    }
  }
}

PtsState PtsState::single(Index r) {
  std::vector<Index> all(static_cast<std::size_t>(r));
  for (Index i = 0; i < r; ++i) all[static_cast<std::size_t>(i)] = i;
  return from_groups({all}, r);
}

PtsState PtsState::from_groups(std::vector<std::vector<Index>> groups, Index r) {
  PtsState st;
  st.group_of_.assign(static_cast<std::size_t>(r), std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    auto& g = groups[k];
    if (g.empty() && r > 0) throw Error(ErrorKind::kInvalidInput, fmt::format("priority group {} is empty", k + 1));
    std::sort(g.begin(), g.end());
    for (Index i : g) {
      if (i < 0 || i >= r) {
        throw Error(ErrorKind::kInvalidInput, fmt::format("priority group index {} outside 1..{}", i + 1, r));
      }
      auto& slot = st.group_of_[static_cast<std::size_t>(i)];
      if (slot != std::numeric_limits<std::size_t>::max()) {
        throw Error(ErrorKind::kInvalidInput, fmt::format("inequality {} appears in two priority groups", i + 1));
      }
      slot = k;
    }
  }
  for (Index i = 0; i < r; ++i) {
    if (st.group_of_[static_cast<std::size_t>(i)] == std::numeric_limits<std::size_t>::max()) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("inequality {} is missing from the priority groups", i + 1));
    }
  }
  if (r > 0 && groups.empty()) throw Error(ErrorKind::kInvalidInput, "no priority groups");
  st.groups_ = std::move(groups);
  st.enabled_ = st.groups_.empty() ? 0 : 1;
  return st;
}

bool PtsState::is_enabled(Index constraint) const {
  return group_of_[static_cast<std::size_t>(constraint)] < enabled_;
}

std::vector<std::size_t> PtsState::active_group_ids() const {
  std::vector<std::size_t> ids(enabled_);
  for (std::size_t k = 0; k < enabled_; ++k) ids[k] = k;
  return ids;
}

PtsState pts_update(const PtsState& state, const EvalPoint& eval, double tol) {
  PtsState next = state;
  while (next.enabled_ < next.groups_.size()) {
    bool satisfied = true;
    for (std::size_t k = 0; k < next.enabled_ && satisfied; ++k) {
      for (Index i : next.groups_[k]) {
        if (eval.g(i) > tol) {
          satisfied = false;
          break;
        }
      }
    }
    if (!satisfied) break;
    ++next.enabled_;
  }
  return next;
}

WorkingSet classify(const EvalPoint& eval, double eps_act, const PtsState& pts,
                    const std::optional<std::vector<Index>>& previous_working) {
  WorkingSet ws;
  ws.pts_active_groups = pts.active_group_ids();
  for (Index i = 0; i < eval.g.size(); ++i) {
    if (eval.g(i) >= -eps_act && pts.is_enabled(i)) ws.activated.push_back(i);
  }
  if (!previous_working) {
    ws.working = ws.activated;
  } else {
    std::set_intersection(previous_working->begin(), previous_working->end(), ws.activated.begin(),
                          ws.activated.end(), std::back_inserter(ws.working));
  }
  return ws;
}

RhsResult rhs_feasible(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws, double rank_multiplier) {
  return assemble(eval, gains, ws, rank_multiplier, false);
}

RhsResult rhs_general(const EvalPoint& eval, const GainSet& gains, const WorkingSet& ws, double rank_multiplier) {
  return assemble(eval, gains, ws, rank_multiplier, true);
}

namespace {

// The loop proper. Returns nothing when it stops on a working set whose own
// rows cannot all meet their dynamics (inconsistent stacked targets).
std::optional<RhsResult> working_set_loop(const EvalPoint& eval, const GainSet& gains, const WorkingSet& candidate,
                                          const DynamicsConfig& config) {
  WorkingSet ws = candidate;
  const std::size_t limit = 2 * static_cast<std::size_t>(eval.g.size());
  std::set<std::vector<Index>> seen;
  std::set<Index> touched;
  std::size_t changes = 0;
  while (true) {
    if (!seen.insert(ws.working).second) {
      throw CyclingError(to_size_t({touched.begin(), touched.end()}),
                         fmt::format("working set revisited after {} changes", changes));
    }
    RhsResult res = rhs_general(eval, gains, ws, config.rank_multiplier);
    res.active_set_changes = changes;

    Index change = most_negative(res, config.sign_tol);
    if (change >= 0) {
      erase_sorted(ws.working, change);
    } else {
      change = worst_dynamics_violator(eval, gains, ws, res.dtheta, config.dyn_tol);
      if (change < 0) {
        const Stacked st = stack_constraints(eval, gains, ws.working);
        if (st.a.rows() > 0) {
          const double scale = std::max(1.0, st.target.lpNorm<Eigen::Infinity>());
          if ((st.a * res.dtheta + st.target).lpNorm<Eigen::Infinity>() > config.dyn_tol * scale) return std::nullopt;
        }
        flag_multipliers(res, config.multiplier_bound);
        return res;
      }
      insert_sorted(ws.working, change);
    }
    touched.insert(change);
    if (++changes > limit) {
      throw CyclingError(to_size_t({touched.begin(), touched.end()}),
                         fmt::format("working set did not settle within {} changes", limit));
    }
  }
}

}  // namespace

RhsResult resolve_working_set(const EvalPoint& eval, const GainSet& gains, const WorkingSet& candidate,
                              const DynamicsConfig& config) {
  std::optional<CyclingError> cycling;
  try {
    if (auto res = working_set_loop(eval, gains, candidate, config)) return *std::move(res);
  } catch (const CyclingError& e) {
    cycling = e;
  }
  const LpResult lp = feasibility_lp(eval, gains, candidate.activated, config.lp_box);
  if (lp.gamma > config.lp_gamma_tol) {
    throw Error(ErrorKind::kInfeasibleSubproblem,
                fmt::format("no direction meets the required constraint dynamics (LP gamma = {:.3g})", lp.gamma));
  }
  RhsResult res;
  try {
    res = primal_active_set(eval, gains, candidate, lp.direction, config);
  } catch (const CyclingError&) {
    if (cycling) throw *cycling;
    throw;
  }
  res.lp_gamma = lp.gamma;
  res.used_fallback = true;
  flag_multipliers(res, config.multiplier_bound);
  return res;
}

LpResult feasibility_lp(const EvalPoint& eval, const GainSet& gains, const std::vector<Index>& activated,
                        double box) {
  if (!(box > 0.0)) throw Error(ErrorKind::kInvalidInput, "LP box must be positive");
  const Index n = eval.theta.size();
  const Index s = eval.h.size();

  LpResult out;
  double max_row = 0.0;
  for (Index i : activated) max_row = std::max(max_row, eval.g_jac.row(i).norm());
  const double row_tol = std::max(max_row, 1.0) * static_cast<double>(n) * std::numeric_limits<double>::epsilon();
  std::vector<Index> rows;
  for (Index i : activated) {
    if (eval.g_jac.row(i).norm() <= row_tol) {
      out.excluded_rows.push_back(i);
    } else {
      rows.push_back(i);
    }
  }

  // Variables [d (n), gamma]. gamma is bounded by the largest value any
  // normalized row can take inside the box, so the bound never binds from
  // above and only caps it from below when no row is present.
  double gamma_cap = box * std::sqrt(static_cast<double>(n));
  for (Index i : rows) gamma_cap = std::max(gamma_cap, box * std::sqrt(static_cast<double>(n)) +
                                                           std::abs(gains.k_g(i) * eval.g(i)) / eval.g_jac.row(i).norm());

  LpProblem lp;
  lp.c = Vector::Zero(n + 1);
  lp.c(n) = 1.0;
  lp.lower = Vector::Constant(n + 1, -box);
  lp.upper = Vector::Constant(n + 1, box);
  lp.lower(n) = -gamma_cap;
  lp.upper(n) = gamma_cap;
  lp.a_eq = Matrix::Zero(s, n + 1);
  lp.b_eq = Vector::Zero(s);
  if (s > 0) {
    lp.a_eq.leftCols(n) = eval.h_jac;
    lp.b_eq = -(gains.k_h * eval.h);
  }
  const auto m = static_cast<Index>(rows.size());
  lp.a_le = Matrix::Zero(m, n + 1);
  lp.b_le = Vector::Zero(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    const double norm = eval.g_jac.row(i).norm();
    lp.a_le.block(k, 0, 1, n) = eval.g_jac.row(i) / norm;
    lp.a_le(k, n) = -1.0;
    lp.b_le(k) = -gains.k_g(i) * eval.g(i) / norm;
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::kOptimal) {
    throw Error(ErrorKind::kInfeasibleSubproblem,
                fmt::format("equality rows cannot be met with |d|_inf <= {} (residual {:.3g})", box, sol.infeasibility));
  }
  out.direction = sol.x.head(n);
  out.gamma = sol.x(n);
  return out;
}

RhsResult compute_rhs(const EvalPoint& eval, const GainSet& gains, const WorkingSet& candidate,
                      const DynamicsConfig& config) {
  return resolve_working_set(eval, gains, candidate, config);
}

}  // namespace nlpflow
