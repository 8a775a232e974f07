#include "nlpflow/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nlpflow/errors.hpp"

namespace nlpflow {

namespace {

using linalg::Index;
using linalg::Matrix;
using linalg::Vector;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-11;
constexpr double kRatioTie = 1e-12;

// Tableau in the shifted variables: every column has lower bound 0.
class Tableau {
 public:
  Tableau(Matrix t, Vector rhs, Vector upper, std::vector<Index> basis)
      : t_(std::move(t)), xb_(std::move(rhs)), upper_(std::move(upper)), basis_(std::move(basis)) {
    const Index total = t_.cols();
    at_upper_.assign(static_cast<std::size_t>(total), false);
    is_basic_.assign(static_cast<std::size_t>(total), false);
    for (Index b : basis_) is_basic_[static_cast<std::size_t>(b)] = true;
  }

  // Runs primal simplex for cost vector c; returns iterations spent.
  std::size_t optimize(const Vector& c, std::size_t cap) {
    const Index m = t_.rows();
    const Index total = t_.cols();
    std::size_t iterations = 0;
    Vector cb(m);
    while (true) {
      if (iterations >= cap) throw Error(ErrorKind::kNumericFailure, "simplex: iteration cap reached");
      for (Index i = 0; i < m; ++i) cb(i) = c(basis_[static_cast<std::size_t>(i)]);
      const Vector reduced = c - t_.transpose() * cb;

      Index enter = -1;
      double dir = 0.0;
      for (Index j = 0; j < total; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (is_basic_[uj] || upper_(j) <= 0.0) continue;
        if (!at_upper_[uj] && reduced(j) < -kCostTol) {
          enter = j;
          dir = 1.0;
          break;
        }
        if (at_upper_[uj] && reduced(j) > kCostTol) {
          enter = j;
          dir = -1.0;
          break;
        }
      }
      if (enter < 0) return iterations;
      ++iterations;

      double best = kInf;
      Index leave_row = -1;
      bool leave_to_upper = false;
      for (Index i = 0; i < m; ++i) {
        const double coef = dir * t_(i, enter);
        const Index var = basis_[static_cast<std::size_t>(i)];
        double ratio = kInf;
        bool to_upper = false;
        if (coef > kPivotTol) {
          ratio = std::max(0.0, xb_(i)) / coef;
        } else if (coef < -kPivotTol && std::isfinite(upper_(var))) {
          ratio = std::max(0.0, upper_(var) - xb_(i)) / -coef;
          to_upper = true;
        } else {
          continue;
        }
        // Bland: among (near-)tied ratios the smallest variable index leaves.
        const bool take = leave_row < 0 || ratio < best - kRatioTie ||
                          (ratio <= best + kRatioTie && var < basis_[static_cast<std::size_t>(leave_row)]);
        if (take) {
          best = leave_row < 0 ? ratio : std::min(best, ratio);
          leave_row = i;
          leave_to_upper = to_upper;
        }
      }

      const double flip = upper_(enter);
      if (!std::isfinite(flip) && leave_row < 0) {
        throw Error(ErrorKind::kNumericFailure, "simplex: unbounded direction");
      }
      if (flip <= best) {
        xb_ -= (dir * flip) * t_.col(enter);
        at_upper_[static_cast<std::size_t>(enter)] = dir > 0.0;
        continue;
      }

      const double start = at_upper_[static_cast<std::size_t>(enter)] ? upper_(enter) : 0.0;
      xb_ -= (dir * best) * t_.col(enter);
      const Index leaving = basis_[static_cast<std::size_t>(leave_row)];
      pivot(leave_row, enter);
      xb_(leave_row) = start + dir * best;
      is_basic_[static_cast<std::size_t>(leaving)] = false;
      at_upper_[static_cast<std::size_t>(leaving)] = leave_to_upper;
      is_basic_[static_cast<std::size_t>(enter)] = true;
      at_upper_[static_cast<std::size_t>(enter)] = false;
      basis_[static_cast<std::size_t>(leave_row)] = enter;
    }
  }

  Vector values() const {
    Vector x = Vector::Zero(t_.cols());
    for (Index j = 0; j < t_.cols(); ++j) {
      if (at_upper_[static_cast<std::size_t>(j)]) x(j) = upper_(j);
    }
    for (Index i = 0; i < t_.rows(); ++i) x(basis_[static_cast<std::size_t>(i)]) = xb_(i);
    return x;
  }

  // Fix columns [from, to) at zero.
  void fix_zero(Index from, Index to) {
    for (Index j = from; j < to; ++j) upper_(j) = 0.0;
  }

 private:
  void pivot(Index row, Index col) {
    const double p = t_(row, col);
    t_.row(row) /= p;
    for (Index i = 0; i < t_.rows(); ++i) {
      if (i == row) continue;
      const double factor = t_(i, col);
      if (factor != 0.0) t_.row(i) -= factor * t_.row(row);
    }
  }

  Matrix t_;
  Vector xb_;
  Vector upper_;
  std::vector<Index> basis_;
  std::vector<bool> at_upper_;
  std::vector<bool> is_basic_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& lp) {
  const Index n = lp.c.size();
  const Index m_eq = lp.a_eq.rows();
  const Index m_le = lp.a_le.rows();
  if (n == 0) throw Error(ErrorKind::kInvalidInput, "simplex: no variables");
  if (lp.lower.size() != n || lp.upper.size() != n) throw Error(ErrorKind::kInvalidInput, "simplex: bound size");
  if ((m_eq > 0 && lp.a_eq.cols() != n) || lp.b_eq.size() != m_eq || (m_le > 0 && lp.a_le.cols() != n) ||
      lp.b_le.size() != m_le) {
    throw Error(ErrorKind::kInvalidInput, "simplex: constraint shape mismatch");
  }
  if (!lp.lower.allFinite() || !lp.upper.allFinite() || (lp.upper.array() < lp.lower.array()).any()) {
    throw Error(ErrorKind::kInvalidInput, "simplex: bounds must be finite with lower <= upper");
  }

  const Index m = m_eq + m_le;
  const Index slack0 = n;
  const Index art0 = n + m_le;
  const Index total = art0 + m;

  Matrix t = Matrix::Zero(m, total);
  Vector rhs(m);
  Vector upper(total);
  upper.head(n) = lp.upper - lp.lower;
  upper.segment(slack0, m_le).setConstant(kInf);
  upper.tail(m).setConstant(kInf);
  std::vector<Index> basis(static_cast<std::size_t>(m));

  for (Index i = 0; i < m; ++i) {
    const bool is_eq = i < m_eq;
    Vector row = is_eq ? Vector(lp.a_eq.row(i).transpose()) : Vector(lp.a_le.row(i - m_eq).transpose());
    double beta = (is_eq ? lp.b_eq(i) : lp.b_le(i - m_eq)) - row.dot(lp.lower);
    double slack_coef = is_eq ? 0.0 : 1.0;
    if (!is_eq && beta >= 0.0) {
      // The slack itself is a feasible starting basic variable.
      t.block(i, 0, 1, n) = row.transpose();
      t(i, slack0 + i - m_eq) = 1.0;
      rhs(i) = beta;
      basis[static_cast<std::size_t>(i)] = slack0 + i - m_eq;
      upper(art0 + i) = 0.0;
      continue;
    }
    if (beta < 0.0) {
      row = -row;
      beta = -beta;
      slack_coef = -slack_coef;
    }
    t.block(i, 0, 1, n) = row.transpose();
    if (!is_eq) t(i, slack0 + i - m_eq) = slack_coef;
    t(i, art0 + i) = 1.0;
    rhs(i) = beta;
    basis[static_cast<std::size_t>(i)] = art0 + i;
  }

  const double scale = std::max(1.0, rhs.size() > 0 ? rhs.cwiseAbs().maxCoeff() : 0.0);
  const std::size_t cap = static_cast<std::size_t>(50 * (m + total) + 1000);
  Tableau tableau(std::move(t), std::move(rhs), std::move(upper), std::move(basis));

  LpSolution out;
  Vector phase1 = Vector::Zero(total);
  phase1.tail(m).setOnes();
  out.iterations = tableau.optimize(phase1, cap);
  out.infeasibility = tableau.values().tail(m).sum();
  if (out.infeasibility > 1e-9 * scale) {
    out.status = LpStatus::kInfeasible;
    out.x = lp.lower + tableau.values().head(n);
    return out;
  }

  tableau.fix_zero(art0, total);
  Vector phase2 = Vector::Zero(total);
  phase2.head(n) = lp.c;
  out.iterations += tableau.optimize(phase2, cap);
  out.status = LpStatus::kOptimal;
  out.x = lp.lower + tableau.values().head(n);
  out.objective = lp.c.dot(out.x);
  return out;
}

}  // namespace nlpflow
