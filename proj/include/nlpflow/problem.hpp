#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nlpflow/linalg.hpp"

namespace nlpflow {

using linalg::Index;
using linalg::Matrix;
using linalg::Vector;

/// Everything the flow needs at one parameter vector: objective, constraint
/// values and first derivatives. Constraint convention is g(theta) <= 0 and
/// h(theta) = 0; Jacobians are r x n and s x n.
struct EvalPoint {
  Vector theta;
  double f = 0.0;
  Vector f_grad;
  Vector g;
  Matrix g_jac;
  Vector h;
  Matrix h_jac;
};

/// Function-and-derivative oracle behind an NlpProblem. Implementations fill
/// every field of `out` (already sized by the caller) and must be pure.
class ProblemModel {
 public:
  virtual ~ProblemModel() = default;
  virtual void evaluate(const Vector& theta, EvalPoint& out) const = 0;
};

/// Immutable NLP description: min f(theta) s.t. g(theta) <= 0, h(theta) = 0.
/// Cheap to copy; the model is shared.
class NlpProblem {
 public:
  NlpProblem(std::string name, Index n, Index r, Index s, std::shared_ptr<const ProblemModel> model,
             std::optional<Vector> known_optimum = std::nullopt);

  const std::string& name() const noexcept { return name_; }
  Index n() const noexcept { return n_; }
  Index r() const noexcept { return r_; }
  Index s() const noexcept { return s_; }
  /// Test-harness metadata only; the solver never reads it.
  const std::optional<Vector>& known_optimum() const noexcept { return known_optimum_; }
  const ProblemModel& model() const noexcept { return *model_; }

  /// Evaluates everything in one pass. Throws InvalidInput for a bad theta
  /// and EvaluationError (with the offending component) for non-finite output.
  EvalPoint evaluate(const Vector& theta) const;

 private:
  std::string name_;
  Index n_;
  Index r_;
  Index s_;
  std::shared_ptr<const ProblemModel> model_;
  std::optional<Vector> known_optimum_;
};

struct BuiltinInfo {
  std::string name;
  std::string description;
  std::optional<Index> default_size;
};

/// Registered problems in stable order.
const std::vector<BuiltinInfo>& builtin_registry();

/// Looks up a builtin problem. `size` applies to example2 (default 100) and
/// the two quadratic toys (default 2). Throws Lookup on an unknown name.
///
/// example2 objective: the printed source leaves the quadratic index
/// ambiguous. It is read here as
///   sin(x1 - 1 + 1.5 pi) + sum_{i=2..n} 100 sin(-x_i + 1.5 pi + x_{i-1}^2),
/// i.e. the same x_{i-1}^2 - x_i pattern as the two-sided constraints, with
/// 100 a coefficient. This keeps every term inside the n components, and the
/// all-ones vector is a KKT point with zero multipliers (each cosine factor
/// vanishes there).
NlpProblem builtin(std::string_view name, std::optional<Index> size = std::nullopt);

struct DerivativeCheck {
  double max_rel_error = 0.0;
  std::size_t points_checked = 0;
  std::string worst;  // human-readable location of the worst entry
};

/// Compares the derivative oracle with central finite differences
/// (step 1e-6 * max(1, |theta_i|)) at `points` samples drawn uniformly from
/// [lo, hi]^n. Samples where the problem cannot be evaluated are skipped.
/// The relative error of an entry is |a - fd| / max(1, |fd|).
DerivativeCheck check_derivatives(const NlpProblem& problem, std::size_t points, std::uint64_t seed, double lo = -2.0,
                                  double hi = 2.0);

/// Same check, at caller-supplied points.
DerivativeCheck check_derivatives_at(const NlpProblem& problem, const std::vector<Vector>& points);

}  // namespace nlpflow
