#include "qregress/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "qregress/error.hpp"

namespace qregress::linalg {
namespace {

// Extends the orthonormal columns of q listed in `filled` to a full
// orthonormal set by Gram-Schmidt against the standard basis.
void complete_basis(Matrix& q, const std::vector<bool>& filled) {
  const Eigen::Index m = q.rows();
  Eigen::Index candidate = 0;
  std::vector<bool> have = filled;
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (have[j]) continue;
    while (candidate < m) {
      Vector e = Vector::Unit(m, candidate++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < q.cols(); ++i) {
          if (have[i]) e -= q.col(i).dot(e) * q.col(i);
        }
      }
      const double norm = e.norm();
      if (norm > 1e-8) {
        q.col(j) = e / norm;
        have[j] = true;
        break;
      }
    }
  }
}

Svd jacobi_tall(const Matrix& a, int max_sweeps) {
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  constexpr double eps = 4 * std::numeric_limits<double>::epsilon();

  int sweep = 0;
  for (;; ++sweep) {
    if (sweep >= max_sweeps) throw NumericalError("one-sided Jacobi SVD did not converge", sweep);
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms[j] = w.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms[x] > norms[y]; });

  Svd out{Matrix::Zero(m, n), Vector::Zero(n), Matrix::Zero(n, n)};
  const double scale = norms.size() > 0 ? norms.maxCoeff() : 0.0;
  const double tiny = std::max(scale * m * std::numeric_limits<double>::epsilon(),
                               std::numeric_limits<double>::min());
  std::vector<bool> filled(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.v.col(j) = v.col(src);
    if (norms[src] > tiny) {
      out.s[j] = norms[src];
      out.u.col(j) = w.col(src) / norms[src];
      filled[static_cast<std::size_t>(j)] = true;
    }
  }
  complete_basis(out.u, filled);
  return out;
}

}  // namespace

void fix_column_signs(Matrix& u, Matrix* v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      // Strict comparison keeps the first index on ties. The small relative
      // guard stops round-off from deciding between equal-magnitude entries.
      const double mag = std::abs(u(i, j));
      if (mag > best * (1.0 + 1e-12) + 1e-300) {
        best = mag;
        arg = i;
      }
    }
    if (u(arg, j) < 0) {
      u.col(j) = -u.col(j);
      if (v != nullptr) v->col(j) = -v->col(j);
    }
  }
}

Svd thin_svd(const Matrix& a, int max_sweeps) {
  if (!a.allFinite()) throw DataError("thin_svd: matrix contains non-finite values");
  Svd out;
  if (a.rows() >= a.cols()) {
    out = jacobi_tall(a, max_sweeps);
  } else {
    Svd t = jacobi_tall(a.transpose(), max_sweeps);
    out.u = std::move(t.v);
    out.s = std::move(t.s);
    out.v = std::move(t.u);
  }
  fix_column_signs(out.u, &out.v);
  return out;
}

SymmetricEigen symmetric_eigen(const Matrix& a, int max_sweeps) {
  if (a.rows() != a.cols()) throw ShapeError("symmetric_eigen: matrix is not square");
  if (!a.allFinite()) throw DataError("symmetric_eigen: matrix contains non-finite values");
  const Eigen::Index n = a.rows();
  Matrix s = 0.5 * (a + a.transpose());
  Matrix vec = Matrix::Identity(n, n);
  const double total = s.norm();
  const double tol = std::numeric_limits<double>::epsilon() * std::max(total, 1e-300);

  int sweep = 0;
  for (;; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (std::sqrt(2.0 * off) <= tol) break;
    if (sweep >= max_sweeps) throw NumericalError("Jacobi eigensolver did not converge", sweep);
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double sn = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double skp = s(k, p);
          const double skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double spk = s(p, k);
          const double sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
        s(p, q) = 0.0;
        s(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = vec(k, p);
          const double vkq = vec(k, q);
          vec(k, p) = c * vkp - sn * vkq;
          vec(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return s(x, x) < s(y, y); });
  SymmetricEigen out{Vector(n), Matrix(n, n), sweep};
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values[j] = s(order[j], order[j]);
    out.vectors.col(j) = vec.col(order[j]);
  }
  return out;
}

}  // namespace qregress::linalg
