#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nlpflow/dynamics.hpp"
#include "nlpflow/errors.hpp"
#include "nlpflow/expression.hpp"
#include "nlpflow/linalg.hpp"
#include "test_support.hpp"

using namespace nlpflow;
using testing::max_abs;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector theta_hat() { return vec({2, 0.5, 0.5}); }

// f = 0.5 x'Qx + c'x, g = A x - b, h = E x - e.
class QuadraticModel final : public ProblemModel {
 public:
  QuadraticModel(Matrix q, Vector c, Matrix a, Vector b, Matrix e, Vector ev)
      : q_(std::move(q)), c_(std::move(c)), a_(std::move(a)), b_(std::move(b)), e_(std::move(e)), ev_(std::move(ev)) {}
  void evaluate(const Vector& x, EvalPoint& out) const override {
    out.f = 0.5 * x.dot(q_ * x) + c_.dot(x);
    out.f_grad = q_ * x + c_;
    out.g = a_ * x - b_;
    out.g_jac = a_;
    out.h = e_ * x - ev_;
    out.h_jac = e_;
  }

 private:
  Matrix q_;
  Vector c_;
  Matrix a_;
  Vector b_;
  Matrix e_;
  Vector ev_;
};

NlpProblem quadratic(const Matrix& q, const Vector& c, const Matrix& a, const Vector& b, const Matrix& e,
                     const Vector& ev) {
  return NlpProblem("quad", q.rows(), a.rows(), e.rows(), std::make_shared<QuadraticModel>(q, c, a, b, e, ev));
}

WorkingSet ws_of(std::vector<Index> activated, std::vector<Index> working) {
  WorkingSet ws;
  ws.activated = std::move(activated);
  ws.working = std::move(working);
  return ws;
}

// Working set consistent with the sign and dynamics conditions.
bool consistent(const EvalPoint& e, const GainSet& gains, const WorkingSet& ws, Vector* dtheta) {
  const RhsResult r = rhs_general(e, gains, ws);
  for (Index i : ws.working)
    if (r.pi_i(i) < -1e-10) return false;
  // The working rows themselves must reach their requested dynamics.
  if (max_abs(e.h_jac * r.dtheta + gains.k_h * e.h) > 1e-8) return false;
  for (Index i : ws.working)
    if (std::abs(e.g_jac.row(i).dot(r.dtheta) + gains.k_g(i) * e.g(i)) > 1e-8) return false;
  for (Index i : ws.activated) {
    if (std::find(ws.working.begin(), ws.working.end(), i) != ws.working.end()) continue;
    if (e.g_jac.row(i).dot(r.dtheta) + gains.k_g(i) * e.g(i) > 1e-8) return false;
  }
  *dtheta = r.dtheta;
  return true;
}

}  // namespace

TEST_CASE("classify on example1 at the optimum") {
  const NlpProblem p = builtin("example1");
  const EvalPoint e = p.evaluate(theta_hat());
  const WorkingSet ws = classify(e, 1e-8, PtsState::single(5));
  CHECK(ws.activated == std::vector<Index>{3});
  CHECK(ws.working == std::vector<Index>{3});

  const WorkingSet warm = classify(e, 1e-8, PtsState::single(5), std::vector<Index>{});
  CHECK(warm.working.empty());
  const WorkingSet carried = classify(e, 1e-8, PtsState::single(5), std::vector<Index>{1, 3});
  CHECK(carried.working == std::vector<Index>{3});
}

TEST_CASE("classify at an interior point and with a violated bound") {
  const NlpProblem p = builtin("example1");
  CHECK(classify(p.evaluate(vec({2.1, 0.5, 0.4})), 1e-8, PtsState::single(5)).activated.empty());

  const NlpProblem p2 = builtin("example2");
  Vector start = Vector::Ones(100);
  start(0) = 2.0;
  const WorkingSet ws = classify(p2.evaluate(start), 1e-8, PtsState::single(200));
  REQUIRE(!ws.activated.empty());
  CHECK(ws.activated.front() == 0);
}

TEST_CASE("classify respects PTS groups") {
  const NlpProblem p = builtin("example1");
  const PtsState pts = PtsState::from_groups({{0, 1, 2}, {3, 4}}, 5);
  const EvalPoint e = p.evaluate(vec({-1, 3, 0.5}));
  const WorkingSet ws = classify(e, 1e-8, pts);
  CHECK(ws.activated == std::vector<Index>{0});
}

TEST_CASE("rhs_feasible examples") {
  const NlpProblem ec = builtin("ec-quadratic");
  const GainSet k = GainSet::scalar(2, 1, 0, 1, 1, 1);
  const RhsResult r = rhs_feasible(ec.evaluate(Vector::Ones(2)), k, WorkingSet{});
  CHECK(max_abs(r.dtheta) <= 1e-15);
  CHECK(r.pi_e(0) == doctest::Approx(-1.0));

  const NlpProblem uq = builtin("unconstrained-quadratic");
  const RhsResult u = rhs_feasible(uq.evaluate(vec({1, 2})), GainSet::scalar(2, 0, 0, 0.1, 1, 1), WorkingSet{});
  CHECK(max_abs(u.dtheta - vec({-0.1, -0.2})) <= 1e-15);
  CHECK(u.pi_e.size() == 0);
}

TEST_CASE("the redundant equality of example1 does not change the flow") {
  const NlpProblem with = builtin("example1");
  const NlpProblem without = parse_problem(
      "var 3\nmin -x1*x2 - x2*x3 - x3*x1\nineq -x1\nineq -x2\nineq -x3\n"
      "ineq 0.5*(x1 - 3)^2 + x2^2 + x3^2 - 1\nineq x1/(0.5 + x2^2) + 2*x3 - 4\neq x1 + x2 + x3 - 3\n");
  const GainSet k2 = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  const GainSet k1 = GainSet::scalar(3, 1, 5, 0.1, 0.1, 0.1);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vector theta = testing::random_vector(rng, 3, 0, 2);
    const EvalPoint a = with.evaluate(theta);
    const EvalPoint b = without.evaluate(theta);
    const WorkingSet ws = classify(a, 1e-8, PtsState::single(5));
    CHECK(max_abs(rhs_feasible(a, k2, ws).dtheta - rhs_feasible(b, k1, ws).dtheta) <= 1e-8);
  }
}

TEST_CASE("rhs_general on the equality-constrained quadratic") {
  const NlpProblem ec = builtin("ec-quadratic");
  const EvalPoint e = ec.evaluate(Vector::Zero(2));
  const RhsResult r = rhs_general(e, GainSet::scalar(2, 1, 0, 1, 1, 1), WorkingSet{});
  CHECK(r.pi_e(0) == doctest::Approx(-1.0));
  CHECK(max_abs(r.dtheta - Vector::Ones(2)) <= 1e-14);
  CHECK((e.h_jac * r.dtheta)(0) == doctest::Approx(2.0));
  CHECK(r.stacked_jacobian_rank == 1);
}

TEST_CASE("rhs_general matches rhs_feasible when there is nothing to restore") {
  const NlpProblem p = builtin("example1");
  const EvalPoint e = p.evaluate(theta_hat());
  const GainSet k = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  const WorkingSet ws = ws_of({3}, {3});
  const RhsResult a = rhs_general(e, k, ws);
  const RhsResult b = rhs_feasible(e, k, ws);
  CHECK(max_abs(a.dtheta - b.dtheta) <= 1e-12);
  CHECK(max_abs(a.pi_e - b.pi_e) <= 1e-12);
  CHECK(max_abs(a.pi_i - b.pi_i) <= 1e-12);
}

TEST_CASE("feasible flow keeps the working constraints stationary and descends") {
  const NlpProblem p = builtin("example1");
  const GainSet k = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    // Points on the plane x1 + x2 + x3 = 3 with every inequality inactive or held.
    Vector theta = testing::random_vector(rng, 3, 0.3, 1.6);
    theta(2) = 3.0 - theta(0) - theta(1);
    const EvalPoint e = p.evaluate(theta);
    if (e.g.maxCoeff() > 0) continue;
    const RhsResult r = resolve_working_set(e, k, classify(e, 1e-8, PtsState::single(5)));
    CHECK(max_abs(e.h_jac * r.dtheta) <= 1e-8);
    for (Index i : r.working_set.working) CHECK(std::abs(e.g_jac.row(i).dot(r.dtheta)) <= 1e-8);
    CHECK(e.f_grad.dot(r.dtheta) <= 1e-10);
  }
}

TEST_CASE("rhs_general realises the requested decay rates at full row rank") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Index n = 4;
    const NlpProblem p = quadratic(testing::random_spd(rng, n), testing::random_vector(rng, n),
                                   testing::random_matrix(rng, 2, n), testing::random_vector(rng, 2),
                                   testing::random_matrix(rng, 1, n), testing::random_vector(rng, 1));
    const EvalPoint e = p.evaluate(testing::random_vector(rng, n));
    GainSet k;
    k.k_theta = testing::random_spd(rng, n);
    k.k_h = Matrix::Constant(1, 1, 0.7);
    k.k_g = vec({0.3, 2.0});
    const RhsResult r = rhs_general(e, k, ws_of({0, 1}, {0, 1}));
    CHECK(max_abs(e.h_jac * r.dtheta + k.k_h * e.h) <= 1e-6);
    CHECK(max_abs(e.g_jac * r.dtheta + k.k_g.cwiseProduct(e.g)) <= 1e-6);
  }
}

TEST_CASE("full column rank reduces to the restoration-only form") {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const Index n = 2;
    const NlpProblem p = quadratic(testing::random_spd(rng, n), testing::random_vector(rng, n),
                                   testing::random_matrix(rng, 2, n), testing::random_vector(rng, 2),
                                   testing::random_matrix(rng, 1, n), testing::random_vector(rng, 1));
    const EvalPoint e = p.evaluate(testing::random_vector(rng, n));
    GainSet k;
    k.k_theta = testing::random_spd(rng, n);
    k.k_h = Matrix::Constant(1, 1, 0.4);
    k.k_g = vec({1.5, 0.2});
    const RhsResult r = rhs_general(e, k, ws_of({0, 1}, {0, 1}));
    Matrix hbar(3, n);
    hbar << e.h_jac, e.g_jac;
    Vector target(3);
    target << k.k_h * e.h, k.k_g.cwiseProduct(e.g);
    const Matrix root = linalg::sqrt_spd(k.k_theta);
    const Vector closed = -root * linalg::pinv(hbar * root) * target;
    CHECK(max_abs(r.dtheta - closed) <= 1e-8);
  }
}

TEST_CASE("the Gram-matrix formula agrees with the factored form") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Index n = 5;
    // Rank-deficient equality block.
    Matrix e = testing::random_low_rank(rng, 3, n, 2);
    const NlpProblem p = quadratic(testing::random_spd(rng, n), testing::random_vector(rng, n),
                                   Matrix::Zero(0, n), Vector::Zero(0), e, testing::random_vector(rng, 3));
    const EvalPoint ev = p.evaluate(testing::random_vector(rng, n));
    GainSet k;
    k.k_theta = testing::random_spd(rng, n);
    k.k_h = 0.5 * Matrix::Identity(3, 3);
    k.k_g = Vector::Zero(0);
    const RhsResult r = rhs_general(ev, k, WorkingSet{});
    const Matrix root = linalg::sqrt_spd(k.k_theta);
    const Matrix m = linalg::pinv(ev.h_jac * root);
    const Vector factored =
        -root * m * k.k_h * ev.h - root * (Matrix::Identity(n, n) - m * ev.h_jac * root) * root * ev.f_grad;
    CHECK(max_abs(r.dtheta - factored) <= 1e-8);
    CHECK(r.stacked_jacobian_rank == 2);
  }
}

TEST_CASE("violation decay is non-positive") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const Index n = 3;
    const Matrix e = testing::random_low_rank(rng, 3, n, 2);
    const NlpProblem p = quadratic(Matrix::Identity(n, n), testing::random_vector(rng, n), Matrix::Zero(0, n),
                                   Vector::Zero(0), e, testing::random_vector(rng, 3));
    const EvalPoint ev = p.evaluate(testing::random_vector(rng, n));
    const GainSet k = GainSet::scalar(n, 3, 0, 1, 0.7, 1);
    const RhsResult r = rhs_general(ev, k, WorkingSet{});
    // d(h'K_h h)/dtau = 2 (K_h h)' h_theta dtheta.
    const double rate = 2.0 * (k.k_h * ev.h).dot(ev.h_jac * r.dtheta);
    CHECK(rate <= 1e-12);
    const Vector kh = k.k_h * ev.h;
    CHECK(rate == doctest::Approx(-2.0 * kh.dot(linalg::projector_col(ev.h_jac) * kh)).epsilon(1e-8));
  }
}

TEST_CASE("duplicated or rescaled equality rows leave the flow unchanged") {
  Rng rng(13);
  for (int t = 0; t < 50; ++t) {
    const Index n = 3;
    const Matrix q = testing::random_spd(rng, n);
    const Vector c = testing::random_vector(rng, n);
    const Matrix a = testing::random_matrix(rng, 2, n);
    const Vector b = testing::random_vector(rng, 2);
    const Matrix e = testing::random_matrix(rng, 1, n);
    const Vector ev = testing::random_vector(rng, 1);
    const double scale = rng.uniform(0.5, 3.0);
    Matrix e2(2, n);
    e2 << e, scale * e;
    Vector ev2(2);
    ev2 << ev, scale * ev;
    const NlpProblem base = quadratic(q, c, a, b, e, ev);
    const NlpProblem dup = quadratic(q, c, a, b, e2, ev2);
    const Vector theta = testing::random_vector(rng, n);
    // Equalities held so the restoration target stays consistent.
    const WorkingSet ws = ws_of({}, {});
    const EvalPoint x = base.evaluate(theta);
    const EvalPoint y = dup.evaluate(theta);
    const RhsResult r1 = rhs_feasible(x, GainSet::scalar(n, 1, 2, 0.3, 1, 1), ws);
    const RhsResult r2 = rhs_feasible(y, GainSet::scalar(n, 2, 2, 0.3, 1, 1), ws);
    CHECK(max_abs(r1.dtheta - r2.dtheta) <= 1e-8);
    // Restoration targets scale with the rows, so duplicates agree too.
    const RhsResult g1 = rhs_general(x, GainSet::scalar(n, 1, 2, 0.3, 1, 1), ws);
    const RhsResult g2 = rhs_general(y, GainSet::scalar(n, 2, 2, 0.3, 1, 1), ws);
    CHECK(max_abs(g1.dtheta - g2.dtheta) <= 1e-8);
  }
}

TEST_CASE("resolve_working_set drops the inactive inequality at the example1 optimum") {
  const NlpProblem p = builtin("example1");
  const EvalPoint e = p.evaluate(theta_hat());
  const GainSet k = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  const WorkingSet forced = ws_of({3, 4}, {3, 4});
  const RhsResult forced_rhs = rhs_general(e, k, forced);
  CHECK(forced_rhs.pi_i(4) < 0.0);
  const RhsResult r = resolve_working_set(e, k, forced);
  CHECK(r.working_set.working == std::vector<Index>{3});
  CHECK(r.pi_i(3) == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(r.pi_i(4) == 0.0);
  CHECK(r.active_set_changes == 1);
  CHECK(max_abs(r.dtheta) <= 1e-12);
  // pi_E is split across the two parallel rows in the minimum-norm way.
  CHECK(r.pi_e(0) == doctest::Approx(0.35).epsilon(1e-9));
  CHECK(r.pi_e(1) == doctest::Approx(0.70).epsilon(1e-9));
}

TEST_CASE("resolve_working_set with nothing activated is the equality-only flow") {
  const NlpProblem p = builtin("example1");
  const EvalPoint e = p.evaluate(vec({1.5, 0.8, 0.7}));
  const GainSet k = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  const RhsResult r = resolve_working_set(e, k, WorkingSet{});
  CHECK(r.working_set.working.empty());
  CHECK(max_abs(r.pi_i) == 0.0);
  CHECK(max_abs(r.dtheta - rhs_general(e, k, WorkingSet{}).dtheta) == 0.0);
}

TEST_CASE("an opposing inequality is kept with a positive multiplier") {
  // min 0.5|x - (2, 0)|^2 with x1 <= 1 active: the gradient pushes into the constraint.
  const NlpProblem p = quadratic(Matrix::Identity(2, 2), vec({-2, 0}), vec({1, 0}).transpose(), vec({1}),
                                 Matrix::Zero(0, 2), Vector::Zero(0));
  const EvalPoint e = p.evaluate(vec({1, 0.3}));
  const GainSet k = GainSet::scalar(2, 0, 1, 1, 1, 1);
  const RhsResult r = resolve_working_set(e, k, ws_of({0}, {}));
  CHECK(r.working_set.working == std::vector<Index>{0});
  CHECK(r.pi_i(0) == doctest::Approx(1.0));
  CHECK(max_abs(r.dtheta - vec({0, -0.3})) <= 1e-14);
  Vector d;
  CHECK(!consistent(e, k, ws_of({0}, {}), &d));
  CHECK(consistent(e, k, ws_of({0}, {0}), &d));
}

TEST_CASE("working-set resolution agrees with exhaustive enumeration") {
  Rng rng(2024);
  int checked = 0;
  int unique = 0;
  int infeasible = 0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 1 + static_cast<Index>(rng.next() % 3);
    const Index r = 1 + static_cast<Index>(rng.next() % 3);
    const Index s = static_cast<Index>(rng.next() % 2);
    const Vector theta = testing::random_vector(rng, n);
    const Matrix a = testing::random_matrix(rng, r, n);
    // Inequalities active, slightly violated or slightly inside.
    Vector offset(r);
    for (Index i = 0; i < r; ++i) {
      const auto pick = rng.next() % 3;
      offset(i) = pick == 0 ? 0.0 : (pick == 1 ? rng.uniform(0.01, 0.5) : -rng.uniform(0.01, 0.5));
    }
    const Vector b = a * theta - offset;
    const Matrix e = testing::random_matrix(rng, s, n);
    const Vector ev = e * theta + testing::random_vector(rng, s, -0.2, 0.2);
    const NlpProblem p = quadratic(testing::random_spd(rng, n), testing::random_vector(rng, n), a, b, e, ev);
    const EvalPoint ep = p.evaluate(theta);
    GainSet k;
    k.k_theta = testing::random_spd(rng, n);
    k.k_h = Matrix::Identity(s, s);
    k.k_g = testing::random_vector(rng, r, 0.2, 2.0);
    const WorkingSet cand = classify(ep, 1e-8, PtsState::single(r));

    std::vector<std::vector<Index>> good;
    std::vector<Vector> good_d;
    const std::size_t m = cand.activated.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
      std::vector<Index> w;
      for (std::size_t j = 0; j < m; ++j)
        if (mask & (std::size_t{1} << j)) w.push_back(cand.activated[j]);
      Vector d;
      if (consistent(ep, k, ws_of(cand.activated, w), &d)) {
        good.push_back(w);
        good_d.push_back(d);
      }
    }
    CAPTURE(t);
    ++checked;
    if (good.empty()) {
      // No working set reaches the requested dynamics: the subproblem is infeasible.
      CHECK(feasibility_lp(ep, k, cand.activated, 1e3).gamma > 1e-9);
      try {
        resolve_working_set(ep, k, cand);
        FAIL("expected an infeasible subproblem");
      } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::kInfeasibleSubproblem);
      }
      ++infeasible;
      continue;
    }
    const RhsResult res = resolve_working_set(ep, k, cand);
    if (good.size() == 1) {
      ++unique;
      CHECK(res.working_set.working == good.front());
    } else {
      CHECK(std::find(good.begin(), good.end(), res.working_set.working) != good.end());
    }
    for (const Vector& d : good_d) CHECK(max_abs(res.dtheta - d) <= 1e-8);
    for (Index i : res.working_set.working) CHECK(res.pi_i(i) >= -1e-9);
  }
  CHECK(checked == 100);
  CHECK(unique > 50);
  CHECK(infeasible < 30);
}

TEST_CASE("off-working multipliers are zero and results are finite") {
  const NlpProblem p = builtin("example1");
  const GainSet k = GainSet::scalar(3, 2, 5, 0.1, 0.1, 0.1);
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    const EvalPoint e = p.evaluate(testing::random_vector(rng, 3, -1, 3));
    const RhsResult r = compute_rhs(e, k, classify(e, 1e-8, PtsState::single(5)));
    for (Index i = 0; i < 5; ++i) {
      if (std::find(r.working_set.working.begin(), r.working_set.working.end(), i) == r.working_set.working.end())
        CHECK(r.pi_i(i) == 0.0);
      else
        CHECK(r.pi_i(i) >= -1e-9);
    }
    CHECK(r.dtheta.allFinite());
    CHECK(r.pi_e.allFinite());
  }
}

TEST_CASE("feasibility LP examples") {
  // No inequalities: gamma sits at its lower clamp.
  const NlpProblem ec = builtin("ec-quadratic");
  const LpResult none = feasibility_lp(ec.evaluate(Vector::Zero(2)), GainSet::scalar(2, 1, 0, 1, 1, 1), {}, 10.0);
  CHECK(none.gamma < -1.0);
  CHECK(std::abs(none.direction.sum() - 2.0) <= 1e-9);  // h_theta d = -K_h h = 2

  // x1 <= 0 and -x1 <= 0 at x1 = 0: gamma = 0 at d = 0.
  Matrix a(2, 1);
  a << 1, -1;
  const NlpProblem opp = quadratic(Matrix::Identity(1, 1), vec({1}), a, vec({0, 0}), Matrix::Zero(0, 1),
                                   Vector::Zero(0));
  const LpResult z = feasibility_lp(opp.evaluate(Vector::Zero(1)), GainSet::scalar(1, 0, 2, 1, 1, 1), {0, 1}, 5.0);
  CHECK(std::abs(z.gamma) <= 1e-12);
  CHECK(std::abs(z.direction(0)) <= 1e-12);

  // Single violated row g = x1 - 1 at x1 = 2.
  const NlpProblem one = quadratic(Matrix::Identity(1, 1), vec({0}), Matrix::Ones(1, 1), vec({1}),
                                   Matrix::Zero(0, 1), Vector::Zero(0));
  const LpResult v = feasibility_lp(one.evaluate(vec({2})), GainSet::scalar(1, 0, 1, 1, 1, 1), {0}, 2.0);
  CHECK(v.gamma <= 0.0);
  CHECK(v.direction(0) <= -1.0);
}

TEST_CASE("feasibility LP reports zero-gradient rows and inconsistent equalities") {
  Matrix a(2, 2);
  a << 0, 0, 1, 0;
  const NlpProblem p = quadratic(Matrix::Identity(2, 2), vec({0, 0}), a, vec({0, 0}), Matrix::Zero(0, 2),
                                 Vector::Zero(0));
  const LpResult r = feasibility_lp(p.evaluate(Vector::Zero(2)), GainSet::scalar(2, 0, 2, 1, 1, 1), {0, 1}, 1.0);
  CHECK(r.excluded_rows == std::vector<Index>{0});

  // x1 = 0 and x1 = 5 cannot both move to feasibility with a unit rate.
  Matrix e(2, 2);
  e << 1, 0, 1, 0;
  const NlpProblem bad = quadratic(Matrix::Identity(2, 2), vec({0, 0}), Matrix::Zero(0, 2), Vector::Zero(0), e,
                                   vec({0, 5}));
  try {
    feasibility_lp(bad.evaluate(vec({1, 0})), GainSet::scalar(2, 2, 0, 1, 1, 1), {}, 1.0);
    FAIL("expected an infeasible subproblem");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kInfeasibleSubproblem);
  }
}

TEST_CASE("PTS examples") {
  const NlpProblem p = builtin("example1");
  const PtsState two = PtsState::from_groups({{0, 1, 2}, {3, 4}}, 5);
  CHECK(two.enabled_groups() == 1);
  CHECK(two.is_enabled(0));
  CHECK(!two.is_enabled(3));

  const PtsState still = pts_update(two, p.evaluate(vec({-1, 1, 1})), 1e-6);
  CHECK(still.enabled_groups() == 1);
  const PtsState joined = pts_update(still, p.evaluate(vec({1, 1, 1})), 1e-6);
  CHECK(joined.enabled_groups() == 2);
  CHECK(joined.is_enabled(4));
  // Latched once enabled.
  CHECK(pts_update(joined, p.evaluate(vec({-1, 1, 1})), 1e-6).enabled_groups() == 2);

  const PtsState single = PtsState::single(5);
  CHECK(single.enabled_groups() == 1);
  for (Index i = 0; i < 5; ++i) CHECK(single.is_enabled(i));

  const PtsState three = PtsState::from_groups({{0}, {1}, {2, 3, 4}}, 5);
  CHECK(pts_update(three, p.evaluate(theta_hat()), 1e-6).enabled_groups() == 3);
}

TEST_CASE("PTS groups must partition the inequalities") {
  CHECK_THROWS_AS(PtsState::from_groups({{0, 1}, {1, 2}}, 3), Error);
  CHECK_THROWS_AS(PtsState::from_groups({{0, 1}}, 3), Error);
  CHECK_THROWS_AS(PtsState::from_groups({{0, 5}}, 2), Error);
  CHECK_THROWS_AS(PtsState::from_groups({{0, 1}, {}}, 2), Error);
}

TEST_CASE("gain validation") {
  GainSet ok = GainSet::scalar(2, 1, 1, 0.1, 0.1, 0.1);
  CHECK_NOTHROW(ok.validate(2, 1, 1));
  CHECK_THROWS_AS(ok.validate(3, 1, 1), Error);
  GainSet asym = ok;
  asym.k_theta(0, 1) = 0.05;
  CHECK_THROWS_AS(asym.validate(2, 1, 1), Error);
  GainSet indef = ok;
  indef.k_theta(1, 1) = -1;
  CHECK_THROWS_AS(indef.validate(2, 1, 1), Error);
  GainSet rate = ok;
  rate.k_g(0) = 0;
  CHECK_THROWS_AS(rate.validate(2, 1, 1), Error);
}

TEST_CASE("compute_rhs handles duplicated inequality rows") {
  // x1 <= 0 twice (duplicate rows) plus -x1 <= 0 with a gradient pushing x1 up.
  Matrix a(3, 1);
  a << 1, 1, -1;
  const NlpProblem p = quadratic(Matrix::Identity(1, 1), vec({-1}), a, vec({0, 0, 0}), Matrix::Zero(0, 1),
                                 Vector::Zero(0));
  const EvalPoint e = p.evaluate(Vector::Zero(1));
  const GainSet k = GainSet::scalar(1, 0, 3, 1, 1, 1);
  const RhsResult r = compute_rhs(e, k, classify(e, 1e-8, PtsState::single(3)));
  CHECK(std::abs(r.dtheta(0)) <= 1e-9);
  for (Index i : r.working_set.working) CHECK(r.pi_i(i) >= -1e-9);
}

TEST_CASE("feasibility LP certifies an infeasible subproblem") {
  // x <= -1 and -x <= -1 at x = 0 with rates pulling both ways.
  Matrix a(2, 1);
  a << 1, -1;
  const NlpProblem p = quadratic(Matrix::Identity(1, 1), vec({0}), a, vec({-1, -1}), Matrix::Zero(0, 1),
                                 Vector::Zero(0));
  const EvalPoint e = p.evaluate(Vector::Zero(1));
  const LpResult lp = feasibility_lp(e, GainSet::scalar(1, 0, 2, 1, 1, 1), {0, 1}, 1e3);
  CHECK(lp.gamma > 0.5);
}
