#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "nlpflow/errors.hpp"
#include "nlpflow/problem.hpp"

namespace nlpflow {
namespace {

constexpr double kPi = std::numbers::pi;

// min -x1 x2 - x2 x3 - x3 x1 with three bounds, an ellipsoid, a rational IEC
// and a deliberately redundant pair of equalities (h2 = 2 h1).
class Example1 final : public ProblemModel {
 public:
  void evaluate(const Vector& x, EvalPoint& out) const override {
    const double x1 = x(0), x2 = x(1), x3 = x(2);
    out.f = -x1 * x2 - x2 * x3 - x3 * x1;
    out.f_grad << -x2 - x3, -x1 - x3, -x2 - x1;

    const double denom = 0.5 + x2 * x2;
    out.g << -x1, -x2, -x3, 0.5 * (x1 - 3.0) * (x1 - 3.0) + x2 * x2 + x3 * x3 - 1.0, x1 / denom + 2.0 * x3 - 4.0;
    out.g_jac.setZero();
    out.g_jac(0, 0) = -1.0;
    out.g_jac(1, 1) = -1.0;
    out.g_jac(2, 2) = -1.0;
    out.g_jac.row(3) << x1 - 3.0, 2.0 * x2, 2.0 * x3;
    out.g_jac.row(4) << 1.0 / denom, -2.0 * x1 * x2 / (denom * denom), 2.0;

    const double sum = x1 + x2 + x3;
    out.h << sum - 3.0, 2.0 * sum - 6.0;
    out.h_jac.row(0).setConstant(1.0);
    out.h_jac.row(1).setConstant(2.0);
  }
};

// n-dimensional chain problem. Inequality rows, in order:
//   x1 - 1.5 <= 0, 0.5 - x1 <= 0, then for i = 2..n
//   (x_{i-1}^2 - x_i) - pi <= 0, -pi - (x_{i-1}^2 - x_i) <= 0.
// Equalities x_i - x_{i+1} = 0 for i = 1..n-1.
class Example2 final : public ProblemModel {
 public:
  explicit Example2(Index n) : n_(n) {}

  void evaluate(const Vector& x, EvalPoint& out) const override {
    const double first = x(0) - 1.0 + 1.5 * kPi;
    out.f = std::sin(first);
    out.f_grad.setZero();
    out.f_grad(0) = std::cos(first);
    for (Index i = 1; i < n_; ++i) {
      const double arg = -x(i) + 1.5 * kPi + x(i - 1) * x(i - 1);
      out.f += 100.0 * std::sin(arg);
      const double c = 100.0 * std::cos(arg);
      out.f_grad(i) -= c;
      out.f_grad(i - 1) += 2.0 * x(i - 1) * c;
    }

    out.g_jac.setZero();
    out.g(0) = x(0) - 1.5;
    out.g(1) = 0.5 - x(0);
    out.g_jac(0, 0) = 1.0;
    out.g_jac(1, 0) = -1.0;
    for (Index i = 1; i < n_; ++i) {
      const Index row = 2 * i;
      const double e = x(i - 1) * x(i - 1) - x(i);
      out.g(row) = e - kPi;
      out.g(row + 1) = -kPi - e;
      out.g_jac(row, i - 1) = 2.0 * x(i - 1);
      out.g_jac(row, i) = -1.0;
      out.g_jac(row + 1, i - 1) = -2.0 * x(i - 1);
      out.g_jac(row + 1, i) = 1.0;
    }

    out.h_jac.setZero();
    for (Index i = 0; i + 1 < n_; ++i) {
      out.h(i) = x(i) - x(i + 1);
      out.h_jac(i, i) = 1.0;
      out.h_jac(i, i + 1) = -1.0;
    }
  }

 private:
  Index n_;
};

// min 0.5 |x|^2 s.t. sum(x) - n = 0; optimum all ones with multiplier -1.
class EcQuadratic final : public ProblemModel {
 public:
  explicit EcQuadratic(Index n) : n_(n) {}
  void evaluate(const Vector& x, EvalPoint& out) const override {
    out.f = 0.5 * x.squaredNorm();
    out.f_grad = x;
    out.h(0) = x.sum() - static_cast<double>(n_);
    out.h_jac.row(0).setConstant(1.0);
  }

 private:
  Index n_;
};

class UnconstrainedQuadratic final : public ProblemModel {
 public:
  void evaluate(const Vector& x, EvalPoint& out) const override {
    out.f = 0.5 * x.squaredNorm();
    out.f_grad = x;
  }
};

Index checked_size(std::string_view name, std::optional<Index> size, Index fallback, Index minimum) {
  const Index n = size.value_or(fallback);
  if (n < minimum) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("builtin '{}': size must be at least {}", name, minimum));
  }
  return n;
}

}  // namespace

const std::vector<BuiltinInfo>& builtin_registry() {
  static const std::vector<BuiltinInfo> registry = {
      {"example1", "3 variables, 5 inequalities, 2 redundant equalities; optimum [2, 0.5, 0.5]", std::nullopt},
      {"example2", "n-variable sinusoidal chain, 2n inequalities, n-1 equalities; optimum all ones", Index{100}},
      {"ec-quadratic", "min 0.5|x|^2 s.t. sum(x) = n; optimum all ones", Index{2}},
      {"unconstrained-quadratic", "min 0.5|x|^2; optimum zero", Index{2}},
  };
  return registry;
}

NlpProblem builtin(std::string_view name, std::optional<Index> size) {
  if (name == "example1") {
    if (size && *size != 3) throw Error(ErrorKind::kInvalidInput, "builtin 'example1' has fixed size 3");
    Vector opt(3);
    opt << 2.0, 0.5, 0.5;
    return NlpProblem("example1", 3, 5, 2, std::make_shared<Example1>(), opt);
  }
  if (name == "example2") {
    const Index n = checked_size(name, size, 100, 2);
    return NlpProblem("example2", n, 2 * n, n - 1, std::make_shared<Example2>(n), Vector::Ones(n));
  }
  if (name == "ec-quadratic") {
    const Index n = checked_size(name, size, 2, 1);
    return NlpProblem("ec-quadratic", n, 0, 1, std::make_shared<EcQuadratic>(n), Vector::Ones(n));
  }
  if (name == "unconstrained-quadratic") {
    const Index n = checked_size(name, size, 2, 1);
    return NlpProblem("unconstrained-quadratic", n, 0, 0, std::make_shared<UnconstrainedQuadratic>(), Vector::Zero(n));
  }
  throw Error(ErrorKind::kLookup, fmt::format("unknown builtin problem '{}'", name));
}

}  // namespace nlpflow
