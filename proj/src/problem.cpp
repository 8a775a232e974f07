#include "nlpflow/problem.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "nlpflow/errors.hpp"
#include "nlpflow/random.hpp"

namespace nlpflow {

NlpProblem::NlpProblem(std::string name, Index n, Index r, Index s, std::shared_ptr<const ProblemModel> model,
                       std::optional<Vector> known_optimum)
    : name_(std::move(name)), n_(n), r_(r), s_(s), model_(std::move(model)), known_optimum_(std::move(known_optimum)) {
  if (n_ < 1 || r_ < 0 || s_ < 0) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("problem '{}': bad dimensions n={} r={} s={}", name_, n_, r_, s_));
  }
  if (!model_) throw Error(ErrorKind::kInvalidInput, fmt::format("problem '{}': missing model", name_));
  if (known_optimum_ && known_optimum_->size() != n_) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("problem '{}': known optimum has wrong length", name_));
  }
}

EvalPoint NlpProblem::evaluate(const Vector& theta) const {
  if (theta.size() != n_) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("problem '{}': theta has length {}, expected {}", name_, theta.size(), n_));
  }
  if (!theta.allFinite()) throw Error(ErrorKind::kInvalidInput, "theta contains non-finite entries");

  EvalPoint out;
  out.theta = theta;
  out.f_grad = Vector::Zero(n_);
  out.g = Vector::Zero(r_);
  out.g_jac = Matrix::Zero(r_, n_);
  out.h = Vector::Zero(s_);
  out.h_jac = Matrix::Zero(s_, n_);
  model_->evaluate(theta, out);

  if (!std::isfinite(out.f) || !out.f_grad.allFinite()) {
    throw EvaluationError("f", 0, fmt::format("problem '{}': objective or gradient is not finite", name_));
  }
  for (Index i = 0; i < r_; ++i) {
    if (!std::isfinite(out.g(i)) || !out.g_jac.row(i).allFinite()) {
      throw EvaluationError("g", static_cast<std::size_t>(i),
                            fmt::format("problem '{}': inequality g{} is not finite", name_, i + 1));
    }
  }
  for (Index i = 0; i < s_; ++i) {
    if (!std::isfinite(out.h(i)) || !out.h_jac.row(i).allFinite()) {
      throw EvaluationError("h", static_cast<std::size_t>(i),
                            fmt::format("problem '{}': equality h{} is not finite", name_, i + 1));
    }
  }
  return out;
}

namespace {

double rel_error(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

}  // namespace

DerivativeCheck check_derivatives_at(const NlpProblem& problem, const std::vector<Vector>& points) {
  DerivativeCheck result;
  const Index n = problem.n();
  for (const Vector& theta : points) {
    EvalPoint base;
    std::vector<EvalPoint> plus;
    std::vector<EvalPoint> minus;
    std::vector<double> steps;
    try {
      base = problem.evaluate(theta);
      for (Index j = 0; j < n; ++j) {
        const double step = 1e-6 * std::max(1.0, std::abs(theta(j)));
        Vector tp = theta;
        Vector tm = theta;
        tp(j) += step;
        tm(j) -= step;
        plus.push_back(problem.evaluate(tp));
        minus.push_back(problem.evaluate(tm));
        steps.push_back(step);
      }
    } catch (const Error&) {
      continue;
    }
    ++result.points_checked;

    auto consider = [&](double analytic, double fd, const std::string& where) {
      const double e = rel_error(analytic, fd);
      if (e > result.max_rel_error) {
        result.max_rel_error = e;
        result.worst = where;
      }
    };
    for (Index j = 0; j < n; ++j) {
      const auto& p = plus[static_cast<std::size_t>(j)];
      const auto& m = minus[static_cast<std::size_t>(j)];
      const double inv = 1.0 / (2.0 * steps[static_cast<std::size_t>(j)]);
      consider(base.f_grad(j), (p.f - m.f) * inv, fmt::format("df/dx{}", j + 1));
      for (Index i = 0; i < problem.r(); ++i) {
        consider(base.g_jac(i, j), (p.g(i) - m.g(i)) * inv, fmt::format("dg{}/dx{}", i + 1, j + 1));
      }
      for (Index i = 0; i < problem.s(); ++i) {
        consider(base.h_jac(i, j), (p.h(i) - m.h(i)) * inv, fmt::format("dh{}/dx{}", i + 1, j + 1));
      }
    }
  }
  return result;
}

DerivativeCheck check_derivatives(const NlpProblem& problem, std::size_t points, std::uint64_t seed, double lo,
                                  double hi) {
  Rng rng(seed);
  std::vector<Vector> samples;
  samples.reserve(points);
  for (std::size_t k = 0; k < points; ++k) {
    Vector theta(problem.n());
    for (Index j = 0; j < problem.n(); ++j) theta(j) = rng.uniform(lo, hi);
    samples.push_back(std::move(theta));
  }
  return check_derivatives_at(problem, samples);
}

}  // namespace nlpflow
