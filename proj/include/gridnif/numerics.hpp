#pragma once

// Dense symmetric linear algebra and scalar convex minimisation.
//
// Everything here is header-only and templated on the Eigen expression type,
// so float/double/long double matrices all work. The symmetric eigensolver is
// a cyclic Jacobi iteration; it is slow for large n but feeders stay at a few
// hundred buses and Jacobi is accurate to working precision on small
// eigenvalues, which matters for condition numbers of R.

#include <Eigen/Dense>
#include <Eigen/Jacobi>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gridnif/errors.hpp"

namespace gridnif {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct NumericTolerances {
  /// Maximum |A - A^T| relative to max |A_ij| before an input counts as non-symmetric.
  double symmetry = 1e-9;
  /// lambda_min must exceed this times lambda_max for a matrix to count as positive definite.
  double definiteness = 1e-12;
  int max_sweeps = 100;
};

template <typename Scalar>
struct EigDecomp {
  DenseVector<Scalar> eigenvalues;   // ascending
  DenseMatrix<Scalar> eigenvectors;  // orthonormal columns, matching eigenvalues

  DenseMatrix<Scalar> reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

template <typename Derived>
typename Derived::Scalar max_abs_entry(const Eigen::MatrixBase<Derived>& a) {
  return a.size() == 0 ? typename Derived::Scalar(0) : a.cwiseAbs().maxCoeff();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double rel_tol = NumericTolerances{}.symmetry) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) return false;
  const Scalar scale = max_abs_entry(a);
  if (scale == Scalar(0)) return true;
  return max_abs_entry(a - a.transpose()) <= Scalar(rel_tol) * scale;
}

/// Full spectral decomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Eigenvalues come back ascending. Each eigenvector is signed so that its
/// largest-magnitude component is nonnegative (first such index on ties), which
/// keeps serialized output reproducible.
template <typename Derived>
EigDecomp<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& input,
                                            const NumericTolerances& tol = {}) {
  using Scalar = typename Derived::Scalar;
  if (input.rows() != input.cols() || input.rows() < 1) {
    throw ValidationError("sym_eig: matrix must be square and non-empty");
  }
  if (!is_symmetric(input, tol.symmetry)) {
    throw ValidationError("sym_eig: matrix is not symmetric");
  }
  const Eigen::Index n = input.rows();
  DenseMatrix<Scalar> a = (input + input.transpose()) / Scalar(2);
  DenseMatrix<Scalar> v = DenseMatrix<Scalar>::Identity(n, n);

  const Scalar frob = a.norm();
  const Scalar stop = frob * std::numeric_limits<Scalar>::epsilon();
  for (int sweep = 0; sweep < tol.max_sweeps; ++sweep) {
    Scalar off = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= stop) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == Scalar(0)) continue;
        Eigen::JacobiRotation<Scalar> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        v.applyOnTheRight(p, q, rot);
        a(p, q) = a(q, p) = Scalar(0);
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  EigDecomp<Scalar> out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<size_t>(k)];
    out.eigenvalues(k) = a(src, src);
    DenseVector<Scalar> col = v.col(src);
    Eigen::Index big = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::abs(col(i)) > std::abs(col(big))) big = i;
    if (col(big) < Scalar(0)) col = -col;
    out.eigenvectors.col(k) = col;
  }
  return out;
}

/// max |lambda_i(A)| for symmetric A; equals the induced 2-norm.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& a,
                                       const NumericTolerances& tol = {}) {
  const auto eig = sym_eig(a, tol);
  return std::max(std::abs(eig.eigenvalues(0)), std::abs(eig.eigenvalues(eig.eigenvalues.size() - 1)));
}

/// Induced 2-norm of an arbitrary (possibly non-symmetric) matrix, via sqrt(lambda_max(M^T M)).
template <typename Derived>
typename Derived::Scalar operator_norm(const Eigen::MatrixBase<Derived>& m,
                                       const NumericTolerances& tol = {}) {
  using Scalar = typename Derived::Scalar;
  const DenseMatrix<Scalar> gram = m.transpose() * m;
  const auto eig = sym_eig(gram, tol);
  return std::sqrt(std::max(Scalar(0), eig.eigenvalues(eig.eigenvalues.size() - 1)));
}

namespace detail {
template <typename Scalar>
void require_positive_definite(const DenseVector<Scalar>& eigenvalues, const NumericTolerances& tol,
                               const char* who) {
  const Scalar lo = eigenvalues(0);
  const Scalar hi = eigenvalues(eigenvalues.size() - 1);
  if (!(hi > Scalar(0)) || !(lo > Scalar(tol.definiteness) * hi)) {
    throw ValidationError(std::string(who) +
                          ": matrix is singular or indefinite (disconnected or degenerate network?)");
  }
}
}  // namespace detail

/// kappa(A^{1/2}) = sqrt(lambda_max / lambda_min) for symmetric positive definite A.
template <typename Derived>
typename Derived::Scalar kappa_sqrt(const Eigen::MatrixBase<Derived>& a, const NumericTolerances& tol = {}) {
  const auto eig = sym_eig(a, tol);
  detail::require_positive_definite(eig.eigenvalues, tol, "kappa_sqrt");
  return std::sqrt(eig.eigenvalues(eig.eigenvalues.size() - 1) / eig.eigenvalues(0));
}

/// Principal square root of a symmetric positive definite matrix.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> sqrt_psd(const Eigen::MatrixBase<Derived>& a,
                                               const NumericTolerances& tol = {}) {
  const auto eig = sym_eig(a, tol);
  detail::require_positive_definite(eig.eigenvalues, tol, "sqrt_psd");
  auto b = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() * eig.eigenvectors.transpose();
  DenseMatrix<typename Derived::Scalar> out = b;
  return (out + out.transpose()) / typename Derived::Scalar(2);
}

/// Inverse principal square root A^{-1/2} of a symmetric positive definite matrix.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> inv_sqrt_psd(const Eigen::MatrixBase<Derived>& a,
                                                   const NumericTolerances& tol = {}) {
  const auto eig = sym_eig(a, tol);
  detail::require_positive_definite(eig.eigenvalues, tol, "inv_sqrt_psd");
  DenseMatrix<typename Derived::Scalar> out =
      eig.eigenvectors * eig.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors.transpose();
  return (out + out.transpose()) / typename Derived::Scalar(2);
}

/// Golden-section search for the minimiser of a unimodal f on [lo, hi].
///
/// Stops once the bracket is no wider than tol and returns its midpoint.
template <typename Scalar, typename F>
Scalar minimize_scalar(F&& f, Scalar lo, Scalar hi, Scalar tol) {
  if (lo > hi) throw ValidationError("minimize_scalar: lo > hi");
  if (!(tol > Scalar(0))) throw ValidationError("minimize_scalar: tol must be positive");
  const Scalar inv_phi = (std::sqrt(Scalar(5)) - Scalar(1)) / Scalar(2);
  Scalar a = lo;
  Scalar b = hi;
  Scalar x1 = b - inv_phi * (b - a);
  Scalar x2 = a + inv_phi * (b - a);
  Scalar f1 = f(x1);
  Scalar f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return (a + b) / Scalar(2);
}

}  // namespace gridnif
