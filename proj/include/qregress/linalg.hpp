#pragma once

#include <Eigen/Dense>

namespace qregress {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Row-major dense matrix; used for datasets so each sample row is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace linalg {

/// Thin SVD a = u * diag(s) * v^T with k = min(rows, cols) columns in u and v.
///
/// Singular values are sorted descending. Each left singular vector is
/// scaled so its largest-magnitude entry is non-negative (first such entry
/// on ties) and the matching right vector is flipped with it, which makes
/// the factors reproducible. Columns of u belonging to zero singular
/// values are completed to an orthonormal set deterministically.
struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};

/// One-sided (Hestenes) Jacobi SVD. Throws NumericalError if the sweep
/// limit is reached and DataError on non-finite input.
Svd thin_svd(const Matrix& a, int max_sweeps = 80);

struct SymmetricEigen {
  Vector values;   ///< ascending
  Matrix vectors;  ///< column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Suited to the small
/// kernels built during training diagnostics (n up to a few hundred).
SymmetricEigen symmetric_eigen(const Matrix& a, int max_sweeps = 100);

/// Flip column j of `u` (and of `v`, if given) so that the entry of largest
/// magnitude is non-negative.
void fix_column_signs(Matrix& u, Matrix* v = nullptr);

}  // namespace linalg
}  // namespace qregress
