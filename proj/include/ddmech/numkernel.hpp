#pragma once

// Dense and sparse linear algebra shared by every other module.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

#include "ddmech/error.hpp"

namespace ddmech {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Small symmetric positive definite matrix (m <= 6): material moduli C, S and
/// the embedding-space matrix K.  Construction validates symmetry and
/// positivity, so holders can rely on both.
class SpdMatrixSmall {
 public:
  SpdMatrixSmall() = default;
  explicit SpdMatrixSmall(DenseMatrix a);

  static SpdMatrixSmall identity(int dim);
  static SpdMatrixSmall scaled_identity(int dim, double value);

  int dim() const { return static_cast<int>(a_.rows()); }
  const DenseMatrix& matrix() const { return a_; }
  double operator()(int i, int j) const { return a_(i, j); }

  SpdMatrixSmall inverse() const;
  /// Upper factor R with R^T R = A.
  DenseMatrix cholesky_upper() const;

 private:
  DenseMatrix a_;
};

/// Solves A x = b by Cholesky.  Throws NonSpd on a non-positive pivot.
Vector solve_spd_small(const DenseMatrix& a, const Vector& b);
inline Vector solve_spd_small(const SpdMatrixSmall& a, const Vector& b) {
  return solve_spd_small(a.matrix(), b);
}

/// Assembled linear system over free degrees of freedom (Dirichlet dofs have
/// already been eliminated).
struct SparseSystem {
  int dim = 0;
  std::vector<Triplet> entries;  // duplicates are summed
  Vector rhs;

  SparseMatrix matrix() const;
};

/// Sparse Cholesky factorisation that can be reused for many right-hand sides.
class SpdFactorization {
 public:
  explicit SpdFactorization(const SparseMatrix& a);
  ~SpdFactorization();
  SpdFactorization(SpdFactorization&&) noexcept;
  SpdFactorization& operator=(SpdFactorization&&) noexcept;

  int dim() const { return static_cast<int>(a_.rows()); }
  /// Throws Singular if the relative residual exceeds 1e-8.
  Vector solve(const Vector& b) const;
  const SparseMatrix& matrix() const { return a_; }

 private:
  SparseMatrix a_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

Vector solve_sparse_spd(const SparseSystem& system);

/// ||A x - b|| / max(||b||, 1)
double relative_residual(const SparseMatrix& a, const Vector& x, const Vector& b);
double relative_residual(const DenseMatrix& a, const Vector& x, const Vector& b);

bool all_finite(const Vector& v);
bool all_finite(const DenseMatrix& a);

}  // namespace ddmech
