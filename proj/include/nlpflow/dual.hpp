#pragma once

#include <cmath>

#include "nlpflow/linalg.hpp"

namespace nlpflow {

/// Forward-mode dual number carrying the gradient with respect to all n
/// parameters at once.
struct Dual {
  double value = 0.0;
  linalg::Vector grad;

  static Dual constant(double v, linalg::Index n) { return {v, linalg::Vector::Zero(n)}; }
  static Dual variable(double v, linalg::Index n, linalg::Index which) {
    return {v, linalg::Vector::Unit(n, which)};
  }
};

inline Dual operator+(const Dual& a, const Dual& b) { return {a.value + b.value, a.grad + b.grad}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.value - b.value, a.grad - b.grad}; }
inline Dual operator-(const Dual& a) { return {-a.value, -a.grad}; }
inline Dual operator*(const Dual& a, const Dual& b) {
  return {a.value * b.value, b.value * a.grad + a.value * b.grad};
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double q = a.value / b.value;
  return {q, (a.grad - q * b.grad) / b.value};
}

inline Dual pow(const Dual& a, double p) {
  if (p == 0.0) return {1.0, linalg::Vector::Zero(a.grad.size())};
  if (p == 1.0) return a;
  return {std::pow(a.value, p), (p * std::pow(a.value, p - 1.0)) * a.grad};
}
inline Dual sin(const Dual& a) { return {std::sin(a.value), std::cos(a.value) * a.grad}; }
inline Dual cos(const Dual& a) { return {std::cos(a.value), -std::sin(a.value) * a.grad}; }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.value);
  return {e, e * a.grad};
}
inline Dual log(const Dual& a) { return {std::log(a.value), a.grad / a.value}; }
inline Dual sqrt(const Dual& a) {
  const double r = std::sqrt(a.value);
  return {r, a.grad / (2.0 * r)};
}

}  // namespace nlpflow
