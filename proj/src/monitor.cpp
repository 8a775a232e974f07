#include "nlpflow/monitor.hpp"

#include <algorithm>
#include <cmath>

#include "nlpflow/errors.hpp"

namespace nlpflow {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kContinue: return "continue";
    case Verdict::kConverged: return "converged";
    case Verdict::kHorizonReached: return "horizon-reached";
  }
  return "unknown";
}

KktReport kkt_report(const EvalPoint& eval, const RhsResult& rhs) {
  KktReport rep;
  Vector grad = eval.f_grad;
  if (eval.h.size() > 0) grad += eval.h_jac.transpose() * rhs.pi_e;
  if (eval.g.size() > 0) grad += eval.g_jac.transpose() * rhs.pi_i;
  rep.stationarity = grad.norm();
  rep.ec_violation = eval.h.norm();
  rep.iec_violation = eval.g.cwiseMax(0.0).norm();
  if (eval.g.size() > 0) rep.complementarity = rhs.pi_i.cwiseProduct(eval.g).cwiseAbs().maxCoeff();
  for (Index i : rhs.working_set.working) rep.sign_violation = std::max(rep.sign_violation, -rhs.pi_i(i));
  return rep;
}

bool within(const KktReport& report, const ToleranceSet& tol) {
  return report.stationarity <= tol.stationarity && report.ec_violation <= tol.ec_violation &&
         report.iec_violation <= tol.iec_violation && report.complementarity <= tol.complementarity &&
         report.sign_violation <= tol.sign;
}

std::vector<Index> nonnegative_set(const EvalPoint& eval) {
  std::vector<Index> out;
  for (Index i = 0; i < eval.g.size(); ++i) {
    if (eval.g(i) >= 0.0) out.push_back(i);
  }
  return out;
}

double lyapunov_value(const EvalPoint& eval, const std::vector<Index>& activated, double c1) {
  if (!(c1 > 0.0)) throw Error(ErrorKind::kInvalidInput, "c1 must be positive");
  double gsq = 0.0;
  for (Index i : activated) gsq += eval.g(i) * eval.g(i);
  return eval.h.norm() + std::sqrt(gsq) + c1 * eval.f;
}

Verdict decide(const KktReport& report, const ToleranceSet& tol, double tau, double t_end) {
  if (within(report, tol)) return Verdict::kConverged;
  if (tau >= t_end) return Verdict::kHorizonReached;
  return Verdict::kContinue;
}

}  // namespace nlpflow
