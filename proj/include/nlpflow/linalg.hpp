#pragma once

#include <Eigen/Dense>

namespace nlpflow::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin singular value decomposition M = U diag(sigma) V^T with
/// k = min(rows, cols) singular triplets. U (rows x k) and V (cols x k) have
/// orthonormal columns; directions belonging to numerically-zero singular
/// values are completed so that U^T U = V^T V = I_k.
struct PinvFactorization {
  Matrix u;
  Vector singular_values;  // descending, non-negative
  Matrix v;
  Index numerical_rank = 0;
  double rank_tolerance = 0.0;

  Matrix pseudo_inverse() const;
  Matrix reconstruct() const;
};

/// One-sided Jacobi SVD. A singular value counts towards the numerical rank
/// iff it exceeds max(rows, cols) * sigma_max * eps * rank_multiplier.
/// Throws InvalidInput on empty or non-finite input, NumericFailure if the
/// sweeps do not converge.
PinvFactorization svd(const Matrix& m, double rank_multiplier = 1.0);

/// Moore-Penrose pseudo-inverse, V Sigma^+ U^T.
Matrix pinv(const Matrix& m, double rank_multiplier = 1.0);

/// Orthogonal projector onto the column space, M M^+.
Matrix projector_col(const Matrix& m);
/// Orthogonal projector onto the row space, M^+ M.
Matrix projector_row(const Matrix& m);

/// Symmetric positive-definite square root via eigendecomposition.
/// Throws InvalidInput if K is not symmetric or not positive-definite.
Matrix sqrt_spd(const Matrix& k);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);
/// Symmetric and strictly positive-definite (Cholesky succeeds).
bool is_spd(const Matrix& m, double rel_tol = 1e-12);

}  // namespace nlpflow::linalg
