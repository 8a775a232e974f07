#include "nlpflow/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

namespace nlpflow {

namespace {

double error_norm(const Vector& err, const Vector& y0, const Vector& y1, double rel_tol, double abs_tol) {
  double worst = 0.0;
  for (Index i = 0; i < err.size(); ++i) {
    const double scale = abs_tol + rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    worst = std::max(worst, std::abs(err(i)) / scale);
  }
  return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

double step_factor(double err, double exponent) {
  if (err == 0.0) return 5.0;
  if (!std::isfinite(err)) return 0.2;
  return std::clamp(0.9 * std::pow(err, -exponent), 0.2, 5.0);
}

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (fifth minus fourth order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

// TR-BDF2 constants.
const double kGamma = 2.0 - std::sqrt(2.0);
const double kD = kGamma / 2.0;
const double kErrK = (-3.0 * kGamma * kGamma + 4.0 * kGamma - 2.0) / (12.0 * (2.0 - kGamma));

constexpr double kNewtonTol = 1e-2;
constexpr int kNewtonMaxIter = 10;

}  // namespace

std::string_view to_string(Method m) { return m == Method::kRk45 ? "rk45" : "stiff"; }

Method parse_method(std::string_view text) {
  if (text == "rk45" || text == "explicit-rk45") return Method::kRk45;
  if (text == "stiff") return Method::kStiff;
  throw Error(ErrorKind::kInvalidInput, fmt::format("unknown method '{}' (expected rk45 or stiff)", text));
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw Error(ErrorKind::kInvalidInput, "tolerances must be positive");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw Error(ErrorKind::kInvalidInput, "t_end must be positive");
  const double lo = min_step(), mid = initial_step(), hi = max_step();
  if (!(lo > 0.0) || !(lo <= mid) || !(mid <= hi)) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("step sizes must satisfy 0 < h_min <= h_init <= h_max (got {}, {}, {})", lo, mid, hi));
  }
  if (max_steps == 0) throw Error(ErrorKind::kInvalidInput, "max_steps must be positive");
}

StepOutcome step_rk45(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0, double h, double rel_tol,
                      double abs_tol) {
  const Vector& k1 = f0;
  const Vector k2 = rhs(t + c2 * h, y + h * (a21 * k1));
  const Vector k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
  const Vector k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Vector k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Vector k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  StepOutcome out;
  out.y = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  const Vector k7 = rhs(t + h, out.y);
  const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  out.error = error_norm(err, y, out.y, rel_tol, abs_tol);
  out.accepted = out.error <= 1.0;
  out.h_next = h * step_factor(out.error, 1.0 / 5.0);
  return out;
}

void StiffStepper::refresh_jacobian(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0) {
  const Index n = y.size();
  jac_.resize(n, n);
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  Vector yp = y;
  for (Index j = 0; j < n; ++j) {
    const double delta = root_eps * std::max(1.0, std::abs(y(j)));
    yp(j) = y(j) + delta;
    jac_.col(j) = (rhs(t, yp) - f0) / (yp(j) - y(j));
    yp(j) = y(j);
  }
  have_jac_ = true;
  fresh_ = true;
  ++jacobians_;
}

StepOutcome StiffStepper::step(const OdeRhs& rhs, double t, const Vector& y, const Vector& f0, double h,
                               double rel_tol, double abs_tol) {
  const Index n = y.size();
  if (!have_jac_) refresh_jacobian(rhs, t, y, f0);
  Vector weights(n);
  for (Index i = 0; i < n; ++i) weights(i) = abs_tol + rel_tol * std::abs(y(i));

  while (true) {
    const Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(n, n) - (kD * h) * jac_);

    // Solves z = c + d h f(tz, z); on success f_out holds f at the solution,
    // recovered from the stage equation.
    auto newton = [&](double tz, Vector& z, const Vector& c, Vector& f_out) {
      double previous = std::numeric_limits<double>::infinity();
      for (int it = 0; it < kNewtonMaxIter; ++it) {
        const Vector residual = z - c - (kD * h) * rhs(tz, z);
        const Vector dz = lu.solve(residual);
        z -= dz;
        const double norm = (dz.array().abs() / weights.array()).maxCoeff();
        if (!std::isfinite(norm) || !z.allFinite()) return false;
        if (norm <= kNewtonTol) {
          f_out = (z - c) / (kD * h);
          return true;
        }
        if (it > 0 && norm > 2.0 * previous) return false;
        previous = norm;
      }
      return false;
    };

    Vector f_gamma, f_new;
    Vector z1 = y + (kGamma * h) * f0;
    const Vector c1 = y + (kD * h) * f0;
    bool ok = newton(t + kGamma * h, z1, c1, f_gamma);
    Vector z2;
    if (ok) {
      const Vector c2v = y + (z1 - y) / (kGamma * (2.0 - kGamma));
      z2 = z1 + ((1.0 - kGamma) * h) * f_gamma;
      ok = newton(t + h, z2, c2v, f_new);
    }
    if (!ok) {
      if (!fresh_) {
        refresh_jacobian(rhs, t, y, f0);
        continue;
      }
      StepOutcome out;
      out.y = y;
      out.error = std::numeric_limits<double>::infinity();
      out.h_next = 0.5 * h;
      return out;
    }

    const Vector est = (2.0 * kErrK * h) *
                       (f0 / kGamma - f_gamma / (kGamma * (1.0 - kGamma)) + f_new / (1.0 - kGamma));
    StepOutcome out;
    out.y = z2;
    out.error = error_norm(lu.solve(est), y, out.y, rel_tol, abs_tol);
    out.accepted = out.error <= 1.0;
    out.h_next = h * step_factor(out.error, 1.0 / 3.0);
    if (out.accepted) fresh_ = false;
    return out;
  }
}

OdeResult integrate(const OdeRhs& rhs, double t0, const Vector& y0, const IntegratorConfig& cfg,
                    const OdeObserver& observer, OdeStats* live_stats, const OdeGuard& guard) {
  cfg.validate();
  if (!(t0 < cfg.t_end)) throw Error(ErrorKind::kInvalidInput, "t0 must lie before t_end");
  OdeResult res;
  OdeStats local;
  OdeStats& stats = live_stats ? *live_stats : local;
  stats = OdeStats{};
  StiffStepper stiff;
  OdeRhs counted = [&](double t, const Vector& y) {
    ++stats.rhs_evals;
    return rhs(t, y);
  };

  res.t = t0;
  res.y = y0;
  Vector f = counted(res.t, res.y);
  if (observer && !observer(res.t, res.y, f)) {
    res.stopped = true;
    res.stats = stats;
    return res;
  }

  const double h_min = cfg.min_step();
  const double h_max = cfg.max_step();
  double h = std::min(cfg.initial_step(), h_max);
  const double end_slack = 1e-12 * std::max(1.0, std::abs(cfg.t_end));

  auto underflow = [&](const std::string& why) {
    if (cfg.method == Method::kStiff) {
      return Error(ErrorKind::kNumericFailure,
                   fmt::format("step size fell below h_min = {:g} at tau = {:.6g}: {}", h_min, res.t, why));
    }
    return Error(ErrorKind::kStepFailure,
                 fmt::format("step size fell below h_min = {:g} at tau = {:.6g}: {}; the flow may be stiff, "
                             "try the stiff method",
                             h_min, res.t, why));
  };

  while (cfg.t_end - res.t > end_slack) {
    if (stats.accepted >= cfg.max_steps) {
      throw Error(ErrorKind::kStepFailure,
                  fmt::format("max_steps = {} reached at tau = {:.6g}", cfg.max_steps, res.t));
    }
    const double remaining = cfg.t_end - res.t;
    const bool last = h >= remaining;
    const double hh = last ? remaining : h;

    StepOutcome out;
    stats.jacobians = stiff.jacobian_count();
    try {
      out = cfg.method == Method::kRk45 ? step_rk45(counted, res.t, res.y, f, hh, cfg.rel_tol, cfg.abs_tol)
                                        : stiff.step(counted, res.t, res.y, f, hh, cfg.rel_tol, cfg.abs_tol);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kInvalidInput) throw;
      ++stats.rejected;
      h = 0.5 * hh;
      if (h < h_min) throw underflow(e.what());
      continue;
    }

    if (!out.accepted) {
      ++stats.rejected;
      h = out.h_next;
      if (h < h_min) throw underflow(fmt::format("error estimate {:.3g} above tolerance", out.error));
      continue;
    }

    const double t_new = last ? cfg.t_end : res.t + hh;
    if (guard && !guard(t_new, out.y)) {
      ++stats.rejected;
      h = 0.5 * hh;
      if (h < h_min) throw underflow("step rejected by the state guard");
      continue;
    }

    res.t = t_new;
    res.y = std::move(out.y);
    ++stats.accepted;
    stats.max_accepted_error = std::max(stats.max_accepted_error, out.error);
    f = counted(res.t, res.y);
    // A clipped final step says nothing about the natural step size.
    if (!last) h = std::clamp(out.h_next, h_min, h_max);
    if (observer && !observer(res.t, res.y, f)) {
      res.stopped = true;
      break;
    }
  }
  stats.jacobians = stiff.jacobian_count();
  res.stats = stats;
  return res;
}

std::string_view to_string(TrajectoryStatus s) {
  switch (s) {
    case TrajectoryStatus::kConverged: return "converged";
    case TrajectoryStatus::kHorizonReached: return "horizon-reached";
    case TrajectoryStatus::kError: return "error";
  }
  return "unknown";
}

const FlowState& Trajectory::final_state() const {
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
    if (!it->dense) return *it;
  }
  throw Error(ErrorKind::kInvalidInput, "trajectory has no samples");
}

namespace {

// RHS of the flow with the state that only moves at accepted steps: the PTS
// groups and the warm-start working set.
class FlowRhs {
 public:
  FlowRhs(const NlpProblem& problem, const GainSet& gains, const DynamicsConfig& config, PtsState pts)
      : problem_(problem), gains_(gains), config_(config), committed_pts_(std::move(pts)) {}

  Vector operator()(double, const Vector& theta) {
    EvalPoint eval = problem_.evaluate(theta);
    PtsState pts = pts_update(committed_pts_, eval, config_.pts_tol);
    const WorkingSet candidate = classify(eval, config_.eps_act, pts, committed_working_);
    RhsResult rhs = compute_rhs(eval, gains_, candidate, config_);
    last_eval_ = std::move(eval);
    last_pts_ = std::move(pts);
    last_rhs_ = std::move(rhs);
    return last_rhs_.dtheta;
  }

  // Adopts the state of the most recent evaluation, which the integrator
  // performs at the accepted point just before notifying the observer.
  void commit() {
    committed_pts_ = last_pts_;
    committed_working_ = last_rhs_.working_set.working;
  }

  const EvalPoint& eval() const { return last_eval_; }
  const RhsResult& rhs() const { return last_rhs_; }
  const PtsState& pts() const { return committed_pts_; }

 private:
  const NlpProblem& problem_;
  const GainSet& gains_;
  const DynamicsConfig& config_;
  PtsState committed_pts_;
  std::optional<std::vector<Index>> committed_working_;
  EvalPoint last_eval_;
  PtsState last_pts_;
  RhsResult last_rhs_;
};

FlowState interpolate(const FlowState& a, const FlowState& b, double tau) {
  const double w = (tau - a.tau) / (b.tau - a.tau);
  auto mix = [w](double x, double y) { return (1.0 - w) * x + w * y; };
  FlowState s = a;
  s.tau = tau;
  s.theta = (1.0 - w) * a.theta + w * b.theta;
  s.f = mix(a.f, b.f);
  s.pi_e = (1.0 - w) * a.pi_e + w * b.pi_e;
  s.pi_i = (1.0 - w) * a.pi_i + w * b.pi_i;
  s.kkt.stationarity = mix(a.kkt.stationarity, b.kkt.stationarity);
  s.kkt.ec_violation = mix(a.kkt.ec_violation, b.kkt.ec_violation);
  s.kkt.iec_violation = mix(a.kkt.iec_violation, b.kkt.iec_violation);
  s.kkt.complementarity = mix(a.kkt.complementarity, b.kkt.complementarity);
  s.kkt.sign_violation = mix(a.kkt.sign_violation, b.kkt.sign_violation);
  s.lyapunov = mix(a.lyapunov, b.lyapunov);
  s.rhs_norm = mix(a.rhs_norm, b.rhs_norm);
  s.dense = true;
  return s;
}

struct WarningTally {
  std::size_t count = 0;
  double first_tau = 0.0;
};

}  // namespace

Trajectory solve(const NlpProblem& problem, const GainSet& gains, const Vector& theta0, const SolverOptions& options,
                 const PtsState& pts) {
  gains.validate(problem.n(), problem.s(), problem.r());
  options.integrator.validate();
  if (theta0.size() != problem.n()) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("initial theta has {} entries, problem expects {}", theta0.size(), problem.n()));
  }
  if (!theta0.allFinite()) throw Error(ErrorKind::kInvalidInput, "initial theta must be finite");
  if (pts.groups().empty() && problem.r() > 0) throw Error(ErrorKind::kInvalidInput, "missing priority groups");
  if (!(options.dense_stride >= 0.0)) throw Error(ErrorKind::kInvalidInput, "dense stride must be non-negative");

  FlowRhs flow(problem, gains, options.dynamics, pts);
  Trajectory traj;
  std::map<std::string, WarningTally> tallies;
  auto warn = [&](const std::string& key, double tau) {
    auto& t = tallies[key];
    if (t.count++ == 0) t.first_tau = tau;
  };
  bool started = false;
  bool converged = false;
  Vector g_start;
  double next_dense = options.dense_stride;

  auto observer = [&](double tau, const Vector& theta, const Vector& dtheta) {
    flow.commit();
    const EvalPoint& eval = flow.eval();
    const RhsResult& rhs = flow.rhs();
    FlowState st;
    st.tau = tau;
    st.theta = theta;
    st.f = eval.f;
    st.pi_e = rhs.pi_e;
    st.pi_i = rhs.pi_i;
    st.activated = rhs.working_set.activated;
    st.working = rhs.working_set.working;
    st.pts_enabled_groups = flow.pts().enabled_groups();
    st.kkt = kkt_report(eval, rhs);
    st.lyapunov = lyapunov_value(eval, nonnegative_set(eval), options.lyapunov_c1);
    st.rhs_norm = dtheta.norm();
    g_start = eval.g;

    if (!started) {
      started = true;
      if (problem.r() + problem.s() > 0) {
        try {
          traj.initial_lp_gamma = feasibility_lp(eval, gains, rhs.working_set.activated, options.dynamics.lp_box).gamma;
        } catch (const Error& e) {
          traj.warnings.push_back(fmt::format("initial feasibility LP failed: {}", e.what()));
        }
      }
    } else if (options.dense_stride > 0.0) {
      const FlowState prev = traj.final_state();
      for (; next_dense < tau; next_dense += options.dense_stride) {
        traj.samples.push_back(interpolate(prev, st, next_dense));
      }
      if (next_dense == tau) next_dense += options.dense_stride;
    }

    if (rhs.multiplier_warning) warn("multiplier norm above bound", tau);
    if (rhs.used_fallback) {
      ++traj.fallback_count;
      warn("working-set loop cycled; LP fallback used", tau);
    }
    traj.samples.push_back(std::move(st));
    const Verdict v = decide(traj.samples.back().kkt, options.tolerances, tau, options.integrator.t_end);
    converged = v == Verdict::kConverged;
    return options.fixed_horizon || !converged;
  };

  // Rejects steps that push an enabled inequality further into violation
  // than it was at the step start. Catches jumps across an inactive boundary
  // and drift off a curved active one.
  const OdeGuard guard = [&](double, const Vector& theta) {
    if (!(options.crossing_tol >= 0.0) || problem.r() == 0) return true;
    EvalPoint next;
    try {
      next = problem.evaluate(theta);
    } catch (const Error&) {
      return false;
    }
    for (Index i = 0; i < problem.r(); ++i) {
      if (!flow.pts().is_enabled(i)) continue;
      if (next.g(i) > std::max(g_start(i), 0.0) + options.crossing_tol) return false;
    }
    return true;
  };

  OdeStats stats;
  const OdeRhs rhs = [&flow](double tau, const Vector& theta) { return flow(tau, theta); };
  try {
    integrate(rhs, 0.0, theta0, options.integrator, observer, &stats, guard);
    traj.status = converged ? TrajectoryStatus::kConverged : TrajectoryStatus::kHorizonReached;
  } catch (const Error& e) {
    if (!started) throw;
    traj.status = TrajectoryStatus::kError;
    traj.error_kind = e.kind();
    const FlowState& last = traj.final_state();
    traj.error_message = fmt::format("{} (last good state at tau = {:.6g})", e.what(), last.tau);
  }
  traj.step_count = stats.accepted;
  traj.rhs_eval_count = stats.rhs_evals;
  traj.rejected_steps = stats.rejected;
  traj.jacobian_count = stats.jacobians;
  for (const auto& [key, t] : tallies) {
    traj.warnings.push_back(fmt::format("{}: {} step(s), first at tau = {:.6g}", key, t.count, t.first_tau));
  }
  return traj;
}

}  // namespace nlpflow
