#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "inflect/errors.hpp"

namespace inflect {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Subtracts the column means.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> center_columns(const Eigen::MatrixBase<Derived>& x) {
  DenseMatrix<typename Derived::Scalar> c = x;
  c.rowwise() -= c.colwise().mean();
  return c;
}

/// Linear CKA on column-centered copies of X and Y (paired rows):
/// ||YᵀX||²_F / (||XᵀX||_F · ||YᵀY||_F), clamped to [0, 1].
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar linear_cka(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.rows() != y.rows()) {
    throw InvalidInput("linear_cka: row counts differ (" + std::to_string(x.rows()) + " vs " +
                       std::to_string(y.rows()) + ")");
  }
  if (x.rows() < 2) throw UndefinedInput("linear_cka: need at least two samples");
  const DenseMatrix<Scalar> xc = center_columns(x);
  const DenseMatrix<Scalar> yc = center_columns(y);
  const Scalar s_xy = (yc.transpose() * xc).squaredNorm();
  const Scalar s_xx = (xc.transpose() * xc).squaredNorm();
  const Scalar s_yy = (yc.transpose() * yc).squaredNorm();
  if (s_xx == Scalar(0) || s_yy == Scalar(0)) throw UndefinedInput("linear_cka: zero-variance representation");
  // sqrt(s·s) == s exactly in IEEE arithmetic, so CKA(X, X) is exactly 1.
  const Scalar cka = s_xy / std::sqrt(s_xx * s_yy);
  return std::clamp(cka, Scalar(0), Scalar(1));
}

template <typename Scalar>
struct PcaBasis {
  DenseMatrix<Scalar> basis;  // [d, effective_dim], orthonormal columns
  DenseVector<Scalar> mean;   // [d], mean of the concatenated rows
  DenseVector<Scalar> variances;
  int requested_dim = 0;
  int effective_dim = 0;
  std::string warning;  // non-empty when the basis was reduced

  template <typename Derived>
  DenseMatrix<Scalar> project(const Eigen::MatrixBase<Derived>& x) const {
    return (x.rowwise() - mean.transpose()) * basis;
  }
};

/// Top principal directions of the mean-centered concatenation [before; after],
/// via covariance eigendecomposition. Each direction is sign-fixed so that its
/// largest-magnitude component (lowest index on ties) is positive. Directions
/// with variance below 1e-12 · (largest variance) are dropped and a warning set.
template <typename DerivedA, typename DerivedB>
PcaBasis<typename DerivedA::Scalar> shared_pca_basis(const Eigen::MatrixBase<DerivedA>& before,
                                                      const Eigen::MatrixBase<DerivedB>& after, int pca_dim) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index d = before.cols();
  if (after.cols() != d) throw InvalidInput("shared_pca_basis: column counts differ");
  if (pca_dim < 1 || pca_dim > d) {
    throw InvalidInput("shared_pca_basis: pca_dim " + std::to_string(pca_dim) + " outside [1, " + std::to_string(d) + "]");
  }
  const Eigen::Index n = before.rows() + after.rows();
  if (n < pca_dim) throw InvalidInput("shared_pca_basis: fewer combined rows than pca_dim");

  DenseMatrix<Scalar> z(n, d);
  z << before, after;
  PcaBasis<Scalar> out;
  out.requested_dim = pca_dim;
  out.mean = z.colwise().mean().transpose();
  z.rowwise() -= out.mean.transpose();
  const DenseMatrix<Scalar> cov = (z.transpose() * z) / static_cast<Scalar>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("shared_pca_basis: eigendecomposition failed");

  const DenseVector<Scalar>& evals = solver.eigenvalues();  // ascending
  const Scalar top = std::max(evals(d - 1), Scalar(0));
  int keep = 0;
  for (int k = 0; k < pca_dim; ++k) {
    if (top > Scalar(0) && evals(d - 1 - k) > Scalar(1e-12) * top) ++keep;
  }
  if (keep < pca_dim) {
    out.warning = "shared_pca_basis: data rank " + std::to_string(keep) + " below pca_dim " +
                  std::to_string(pca_dim) + "; basis reduced";
  }
  if (keep == 0) throw UndefinedInput("shared_pca_basis: zero-variance data");
  out.effective_dim = keep;
  out.basis.resize(d, keep);
  out.variances.resize(keep);
  for (int k = 0; k < keep; ++k) {
    DenseVector<Scalar> v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < d; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < Scalar(0)) v = -v;
    out.basis.col(k) = v;
    out.variances(k) = evals(d - 1 - k);
  }
  return out;
}

/// 1 - CKA between before/after representations projected through one shared
/// PCA basis.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar delta_cka(const Eigen::MatrixBase<DerivedA>& before, const Eigen::MatrixBase<DerivedB>& after,
                                    int pca_dim) {
  if (before.rows() != after.rows()) throw InvalidInput("delta_cka: before/after must be paired (same row count)");
  const auto basis = shared_pca_basis(before, after, pca_dim);
  return typename DerivedA::Scalar(1) - linear_cka(basis.project(before), basis.project(after));
}

}  // namespace inflect
