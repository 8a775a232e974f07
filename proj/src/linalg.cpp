#include "nlpflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "nlpflow/errors.hpp"

namespace nlpflow::linalg {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxSweeps = 80;

void require_finite(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("{}: empty matrix ({}x{})", what, m.rows(), m.cols()));
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("{}: non-finite entry", what));
  }
}

// Completes the columns of `q` flagged in `missing` to an orthonormal set,
// orthogonal to the columns that are already valid. Each new column is the
// unit vector with the largest component outside the current span.
void complete_orthonormal(Matrix& q, std::vector<bool> missing) {
  const Index m = q.rows();
  auto project_out = [&](Vector e) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index k = 0; k < q.cols(); ++k) {
        if (missing[static_cast<std::size_t>(k)]) continue;
        e -= q.col(k).dot(e) * q.col(k);
      }
    }
    return e;
  };
  for (Index j = 0; j < q.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    Vector best;
    double best_norm = 0.0;
    for (Index i = 0; i < m; ++i) {
      Vector e = project_out(Vector::Unit(m, i));
      const double norm = e.norm();
      if (norm > best_norm) {
        best_norm = norm;
        best = std::move(e);
      }
    }
    if (!(best_norm > 1e-8)) {
      throw Error(ErrorKind::kNumericFailure, "svd: could not complete orthonormal basis");
    }
    q.col(j) = best / best_norm;
    missing[static_cast<std::size_t>(j)] = false;
  }
}

// Hestenes one-sided Jacobi on a tall (rows >= cols) matrix.
PinvFactorization jacobi_tall(const Matrix& a, double rank_multiplier) {
  const Index m = a.rows();
  const Index n = a.cols();
  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  const double threshold = kEps * static_cast<double>(m);
  // Columns at rounding level of the whole matrix are left alone; they end up
  // below the rank tolerance anyway and rotating them need not converge.
  const double negligible = std::pow(kEps * a.norm(), 2);

  Vector sq_norms(n);
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    // Cached squared column norms, refreshed every sweep to stop drift.
    for (Index j = 0; j < n; ++j) sq_norms(j) = w.col(j).squaredNorm();
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double alpha = sq_norms(p);
        const double beta = sq_norms(q);
        if (alpha <= negligible || beta <= negligible) continue;
        const double gamma = w.col(p).dot(w.col(q));
        if (std::abs(gamma) <= threshold * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        double* wp_col = w.col(p).data();
        double* wq_col = w.col(q).data();
        for (Index i = 0; i < m; ++i) {
          const double wp = wp_col[i];
          const double wq = wq_col[i];
          wp_col[i] = c * wp - s * wq;
          wq_col[i] = s * wp + c * wq;
        }
        double* vp_col = v.col(p).data();
        double* vq_col = v.col(q).data();
        for (Index i = 0; i < n; ++i) {
          const double vp = vp_col[i];
          const double vq = vq_col[i];
          vp_col[i] = c * vp - s * vq;
          vq_col[i] = s * vp + c * vq;
        }
        sq_norms(p) = std::max(0.0, alpha - t * gamma);
        sq_norms(q) = std::max(0.0, beta + t * gamma);
      }
    }
  }
  if (!converged) {
    throw Error(ErrorKind::kNumericFailure, fmt::format("svd: Jacobi sweeps did not converge ({}x{})", m, n));
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vector norms(n);
  for (Index j = 0; j < n; ++j) norms(j) = w.col(j).norm();
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return norms(x) > norms(y); });

  PinvFactorization out;
  out.singular_values.resize(n);
  out.u.resize(m, n);
  out.v.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    out.singular_values(j) = norms(src);
    out.v.col(j) = v.col(src);
    out.u.col(j) = w.col(src);
  }

  const double sigma_max = n > 0 ? out.singular_values(0) : 0.0;
  out.rank_tolerance = static_cast<double>(std::max(m, n)) * sigma_max * kEps * rank_multiplier;
  if (!(out.rank_tolerance > 0.0)) out.rank_tolerance = std::numeric_limits<double>::min();

  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Index j = 0; j < n; ++j) {
    const double sigma = out.singular_values(j);
    if (sigma > out.rank_tolerance) {
      out.u.col(j) /= sigma;
      ++out.numerical_rank;
    } else {
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  if (out.numerical_rank < n) complete_orthonormal(out.u, missing);
  return out;
}

}  // namespace

Matrix PinvFactorization::pseudo_inverse() const {
  const Index r = numerical_rank;
  Matrix result = Matrix::Zero(v.rows(), u.rows());
  if (r == 0) return result;
  result.noalias() = v.leftCols(r) * singular_values.head(r).cwiseInverse().asDiagonal() * u.leftCols(r).transpose();
  return result;
}

Matrix PinvFactorization::reconstruct() const {
  return u * singular_values.asDiagonal() * v.transpose();
}

PinvFactorization svd(const Matrix& m, double rank_multiplier) {
  require_finite(m, "svd");
  if (!(rank_multiplier > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "svd: rank multiplier must be positive");
  }
  if (m.rows() >= m.cols()) return jacobi_tall(m, rank_multiplier);
  PinvFactorization t = jacobi_tall(m.transpose(), rank_multiplier);
  std::swap(t.u, t.v);
  return t;
}

Matrix pinv(const Matrix& m, double rank_multiplier) {
  return svd(m, rank_multiplier).pseudo_inverse();
}

Matrix projector_col(const Matrix& m) {
  return m * pinv(m);
}

Matrix projector_row(const Matrix& m) {
  return pinv(m) * m;
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_spd(const Matrix& m, double rel_tol) {
  if (m.rows() < 1 || !m.allFinite() || !is_symmetric(m, rel_tol)) return false;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

Matrix sqrt_spd(const Matrix& k) {
  require_finite(k, "sqrt_spd");
  if (!is_symmetric(k)) {
    throw Error(ErrorKind::kInvalidInput, "sqrt_spd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumericFailure, "sqrt_spd: eigendecomposition failed");
  }
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorKind::kInvalidInput, "sqrt_spd: matrix is not positive-definite");
  }
  const Matrix& q = eig.eigenvectors();
  Matrix s = q * eig.eigenvalues().cwiseSqrt().asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace nlpflow::linalg
