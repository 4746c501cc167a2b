#include "ddmech/numkernel.hpp"

#include <cmath>
#include <sstream>

namespace ddmech {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonSpd: return "NonSpd";
    case ErrorKind::Singular: return "Singular";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::DivideByZero: return "DivideByZero";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DegenerateElement: return "DegenerateElement";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::MeshMismatch: return "MeshMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

SpdMatrixSmall::SpdMatrixSmall(DenseMatrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols() || a_.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "SpdMatrixSmall must be square and non-empty");
  }
  if (!all_finite(a_)) throw Error(ErrorKind::NonFinite, "SpdMatrixSmall has non-finite entries");
  const double scale = std::max(a_.cwiseAbs().maxCoeff(), 1e-300);
  if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::NonSpd, "matrix is not symmetric");
  }
  a_ = 0.5 * (a_ + a_.transpose());
  Eigen::LLT<DenseMatrix> llt(a_);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NonSpd, "matrix is not positive definite");
}

SpdMatrixSmall SpdMatrixSmall::identity(int dim) {
  return SpdMatrixSmall(DenseMatrix::Identity(dim, dim));
}

SpdMatrixSmall SpdMatrixSmall::scaled_identity(int dim, double value) {
  return SpdMatrixSmall(value * DenseMatrix::Identity(dim, dim));
}

SpdMatrixSmall SpdMatrixSmall::inverse() const {
  const int n = dim();
  DenseMatrix inv(n, n);
  for (int j = 0; j < n; ++j) inv.col(j) = solve_spd_small(a_, Vector::Unit(n, j));
  return SpdMatrixSmall(0.5 * (inv + inv.transpose()));
}

DenseMatrix SpdMatrixSmall::cholesky_upper() const {
  Eigen::LLT<DenseMatrix> llt(a_);
  return llt.matrixU();
}

Vector solve_spd_small(const DenseMatrix& a, const Vector& b) {
  const auto n = a.rows();
  if (a.cols() != n || b.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "solve_spd_small: shape mismatch");
  }
  // Plain Cholesky; the matrices here are at most 6x6.
  DenseMatrix l = DenseMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      std::ostringstream msg;
      msg << "non-positive pivot " << d << " at row " << j;
      throw Error(ErrorKind::NonSpd, msg.str());
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = b(i);
    for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * y(k);
    y(i) = s / l(i, i);
  }
  Vector x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = y(i);
    for (Eigen::Index k = i + 1; k < n; ++k) s -= l(k, i) * x(k);
    x(i) = s / l(i, i);
  }
  return x;
}

SparseMatrix SparseSystem::matrix() const {
  SparseMatrix a(dim, dim);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

SpdFactorization::SpdFactorization(const SparseMatrix& a)
    : a_(a), llt_(std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>()) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "sparse matrix not square");
  if (a.rows() == 0) return;
  llt_->compute(a_);
  if (llt_->info() != Eigen::Success) {
    throw Error(ErrorKind::Singular, "sparse Cholesky failed (rigid modes or non-SPD system)");
  }
}

SpdFactorization::~SpdFactorization() = default;
SpdFactorization::SpdFactorization(SpdFactorization&&) noexcept = default;
SpdFactorization& SpdFactorization::operator=(SpdFactorization&&) noexcept = default;

Vector SpdFactorization::solve(const Vector& b) const {
  if (b.size() != a_.rows()) throw Error(ErrorKind::DimensionMismatch, "rhs size mismatch");
  if (b.size() == 0) return Vector();
  Vector x = llt_->solve(b);
  if (!all_finite(x) || relative_residual(a_, x, b) > 1e-8) {
    throw Error(ErrorKind::Singular, "sparse solve residual above tolerance");
  }
  return x;
}

Vector solve_sparse_spd(const SparseSystem& system) {
  if (system.rhs.size() != system.dim) {
    throw Error(ErrorKind::DimensionMismatch, "SparseSystem rhs size mismatch");
  }
  return SpdFactorization(system.matrix()).solve(system.rhs);
}

double relative_residual(const SparseMatrix& a, const Vector& x, const Vector& b) {
  return (a * x - b).norm() / std::max(b.norm(), 1.0);
}

double relative_residual(const DenseMatrix& a, const Vector& x, const Vector& b) {
  return (a * x - b).norm() / std::max(b.norm(), 1.0);
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const DenseMatrix& a) { return a.allFinite(); }

}  // namespace ddmech
