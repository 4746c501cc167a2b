#include "ddmech/projection.hpp"

#include <cmath>
#include <limits>

#include "ddmech/error.hpp"

namespace ddmech {

double energy_distance2(const PhasePoint& a, const PhasePoint& b, const EnergyMetric& metric) {
  if (a.m() != b.m() || a.m() != metric.m()) {
    throw Error(ErrorKind::DimensionMismatch, "energy_distance2: dimension mismatch");
  }
  const Vector de = a.eps - b.eps;
  const Vector ds = a.sig - b.sig;
  return 0.5 * de.dot(metric.C.matrix() * de) + 0.5 * ds.dot(metric.S.matrix() * ds);
}

NnIndex::NnIndex(MaterialDatabase db, Mode mode) : NnIndex(db, db.metric, mode) {}

NnIndex::NnIndex(MaterialDatabase db, EnergyMetric metric, Mode mode)
    : db_(std::move(db)), metric_(std::move(metric)) {
  if (db_.empty()) throw Error(ErrorKind::InvalidArgument, "NnIndex: empty database");
  if (metric_.m() != db_.m) throw Error(ErrorKind::DimensionMismatch, "NnIndex: metric width");
  use_tree_ = mode == Mode::KdTree || (mode == Mode::Auto && db_.size() >= kBruteForceBelow);
  if (!use_tree_) return;

  rc_ = SpdMatrixSmall(0.5 * metric_.C.matrix()).cholesky_upper();
  rs_ = SpdMatrixSmall(0.5 * metric_.S.matrix()).cholesky_upper();
  DenseMatrix pts(2 * db_.m, static_cast<Eigen::Index>(db_.size()));
  for (std::size_t i = 0; i < db_.size(); ++i) {
    pts.col(static_cast<Eigen::Index>(i)) = transform(db_.points[i]);
  }
  tree_ = KdTree(std::move(pts));
}

Vector NnIndex::transform(const PhasePoint& z) const {
  Vector y(2 * z.m());
  y.head(z.m()) = rc_ * z.eps;
  y.tail(z.m()) = rs_ * z.sig;
  return y;
}

NnIndex::Hit NnIndex::nearest(const PhasePoint& z) const {
  return use_tree_ ? nearest_kdtree(z) : nearest_brute_force(z);
}

NnIndex::Hit NnIndex::nearest_brute_force(const PhasePoint& z) const {
  Hit best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < db_.size(); ++i) {
    const double d = energy_distance2(z, db_.points[i], metric_);
    if (d < best.distance2) best = {i, d};
  }
  return best;
}

NnIndex::Hit NnIndex::nearest_kdtree(const PhasePoint& z) const {
  if (!use_tree_) return nearest_brute_force(z);
  if (z.m() != db_.m) throw Error(ErrorKind::DimensionMismatch, "NnIndex: query width");
  const auto hit = tree_.nearest(transform(z), [&](std::size_t i) {
    return energy_distance2(z, db_.points[i], metric_);
  });
  return {hit.index, hit.distance2};
}

PhasePoint nn_project(const PhasePoint& z, const NnIndex& index) {
  return index.point(index.nearest(z).index);
}

PhasePoint hyperplane_project(const PhasePoint& mapped, const SpdMatrixSmall& k) {
  if (mapped.m() != k.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "hyperplane_project: dimension mismatch");
  }
  PhasePoint out;
  out.eps = 0.5 * (mapped.eps + solve_spd_small(k, mapped.sig));
  out.sig = 0.5 * (mapped.sig + k.matrix() * mapped.eps);
  return out;
}

ManifoldProjector::ManifoldProjector(EmbeddingModel model) : model_(std::move(model)) {
  if (model_.net.width() % 2 != 0 || model_.net.width() == 0) {
    throw Error(ErrorKind::InvalidArgument, "ManifoldProjector: network width must be 2m");
  }
  if (model_.k_fix.dim() != m()) {
    throw Error(ErrorKind::DimensionMismatch, "ManifoldProjector: K width");
  }
}

PhasePoint ManifoldProjector::map_forward(const PhasePoint& z) const {
  if (z.m() != m()) throw Error(ErrorKind::DimensionMismatch, "ManifoldProjector: query width");
  const PhasePoint n = model_.norm.is_identity() ? z : model_.norm.apply(z);
  return PhasePoint::from_stacked(model_.net.forward(n.stacked()));
}

PhasePoint ManifoldProjector::map_backward(const PhasePoint& y) const {
  const PhasePoint n = PhasePoint::from_stacked(model_.net.backward(y.stacked()));
  return model_.norm.is_identity() ? n : model_.norm.invert(n);
}

PhasePoint ManifoldProjector::project(const PhasePoint& z) const {
  return map_backward(hyperplane_project(map_forward(z), model_.k_fix));
}

double ManifoldProjector::residual(const PhasePoint& z) const {
  const PhasePoint y = map_forward(z);
  return (y.sig - model_.k_fix.matrix() * y.eps).norm();
}

PhasePoint manifold_project(const PhasePoint& z, const ManifoldProjector& projector) {
  return projector.project(z);
}

double hyperplane_residual(const PhasePoint& z, const ManifoldProjector& projector) {
  return projector.residual(z);
}

PhasePoint convex_interpolate(const PhasePoint& za, const PhasePoint& zb, double alpha,
                              const ManifoldProjector& projector) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "convex_interpolate: alpha outside [0, 1]");
  }
  const Vector ya = projector.map_forward(za).stacked();
  const Vector yb = projector.map_forward(zb).stacked();
  return projector.map_backward(PhasePoint::from_stacked(alpha * ya + (1.0 - alpha) * yb));
}

}  // namespace ddmech
