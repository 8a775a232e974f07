#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlpflow/dynamics.hpp"
#include "nlpflow/errors.hpp"
#include "nlpflow/monitor.hpp"

namespace nlpflow {

enum class Method { kRk45, kStiff };

std::string_view to_string(Method m);
/// "rk45" / "explicit-rk45" / "stiff". Throws InvalidInput.
Method parse_method(std::string_view text);

struct IntegratorConfig {
  Method method = Method::kRk45;
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  double t_end = 1.0;
  // Unset values default to 1e-3 t_end, 1e-12 and t_end / 10.
  std::optional<double> h_init;
  std::optional<double> h_min;
  std::optional<double> h_max;
  std::size_t max_steps = 200000;

  double initial_step() const { return h_init.value_or(1e-3 * t_end); }
  double min_step() const { return h_min.value_or(1e-12); }
  double max_step() const { return h_max.value_or(t_end / 10.0); }
  /// Throws InvalidInput unless tolerances and t_end are positive and
  /// h_min <= h_init <= h_max.
  void validate() const;
};

using OdeRhs = std::function<Vector(double t, const Vector& y)>;

struct StepOutcome {
  Vector y;
  /// Max-norm of the error estimate in units of abs_tol + rel_tol |y|.
  double error = 0.0;
  double h_next = 0.0;
  bool accepted = false;
};

/// One Dormand-Prince 5(4) step from (t, y) with f0 = f(t, y). Accepts iff
/// error <= 1; h_next uses safety 0.9, exponent 1/5 and growth in [0.2, 5].
StepOutcome step_rk45(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0, double h, double rel_tol,
                      double abs_tol);

/// TR-BDF2 (gamma = 2 - sqrt 2): trapezoidal stage to t + gamma h, BDF2 stage
/// to t + h, both solved by Newton with the iteration matrix I - (gamma/2) h J.
/// J is a forward-difference Jacobian of the RHS, kept across steps and
/// refreshed when Newton fails to converge.
class StiffStepper {
 public:
  StepOutcome step(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0, double h, double rel_tol,
                   double abs_tol);
  std::size_t jacobian_count() const noexcept { return jacobians_; }

 private:
  void refresh_jacobian(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0);

  Matrix jac_;
  bool have_jac_ = false;
  bool fresh_ = false;
  std::size_t jacobians_ = 0;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  std::size_t jacobians = 0;
  double max_accepted_error = 0.0;
};

/// Called at t0 and after every accepted step with the state and f(t, y);
/// returning false stops the integration.
using OdeObserver = std::function<bool(double t, const Vector& y, const Vector& f)>;

/// Called with the proposed state of a step that passed the error test;
/// returning false rejects it and retries with half the step.
using OdeGuard = std::function<bool(double t, const Vector& y)>;

struct OdeResult {
  double t = 0.0;
  Vector y;
  OdeStats stats;
  bool stopped = false;
};

/// Adaptive integration from t0 to cfg.t_end. An exception thrown by the RHS
/// inside a step rejects it and halves h. Throws StepFailure (explicit) or
/// NumericFailure (stiff) once h would drop below h_min, and StepFailure when
/// max_steps accepted steps do not reach t_end. When given, `live_stats` is
/// kept current during the run, so it stays meaningful if an error escapes.
OdeResult integrate(const OdeRhs& rhs, double t0, const Vector& y0, const IntegratorConfig& cfg,
                    const OdeObserver& observer = {}, OdeStats* live_stats = nullptr, const OdeGuard& guard = {});

/// One recorded point of the flow.
struct FlowState {
  double tau = 0.0;
  Vector theta;
  double f = 0.0;
  Vector pi_e;
  Vector pi_i;
  std::vector<Index> activated;
  std::vector<Index> working;
  std::size_t pts_enabled_groups = 0;
  KktReport kkt;
  double lyapunov = 0.0;
  double rhs_norm = 0.0;
  /// Linear interpolation between accepted steps, not an accepted step.
  bool dense = false;
};

enum class TrajectoryStatus { kConverged, kHorizonReached, kError };

std::string_view to_string(TrajectoryStatus s);

struct Trajectory {
  std::vector<FlowState> samples;
  TrajectoryStatus status = TrajectoryStatus::kHorizonReached;
  std::optional<ErrorKind> error_kind;
  std::string error_message;
  std::size_t step_count = 0;
  std::size_t rejected_steps = 0;
  std::size_t rhs_eval_count = 0;
  std::size_t jacobian_count = 0;
  std::size_t fallback_count = 0;
  std::optional<double> initial_lp_gamma;
  std::vector<std::string> warnings;

  /// Last recorded accepted (non-dense) state.
  const FlowState& final_state() const;
};

struct SolverOptions {
  IntegratorConfig integrator;
  ToleranceSet tolerances;
  DynamicsConfig dynamics;
  double lyapunov_c1 = 1e-2;
  /// Integrate to t_end even after the KKT conditions hold.
  bool fixed_horizon = false;
  /// Extra interpolated samples every dense_stride units of tau (0 = off).
  double dense_stride = 0.0;
  /// A step that leaves an enabled inequality above max(g_i at the step
  /// start, 0) + crossing_tol is rejected and retried with half the step.
  /// Negative disables the check.
  double crossing_tol = 1e-6;
};

/// Integrates the flow from theta0. Errors after tau = 0 end the trajectory
/// with status kError and keep the last good state; invalid inputs and a
/// failure at theta0 itself throw.
Trajectory solve(const NlpProblem& problem, const GainSet& gains, const Vector& theta0, const SolverOptions& options,
                 const PtsState& pts);

}  // namespace nlpflow
