#pragma once

// Local projections onto material data: nearest neighbour in the energy
// metric and closed-form projection in a learned embedding.

#include <cstddef>

#include "ddmech/invertible_net.hpp"
#include "ddmech/kdtree.hpp"
#include "ddmech/phasespace.hpp"

namespace ddmech {

/// 1/2 de.C.de + 1/2 ds.S.ds
double energy_distance2(const PhasePoint& a, const PhasePoint& b, const EnergyMetric& metric);

/// Nearest-neighbour search over a database in the energy metric.  The
/// kd-tree works on points mapped by the Cholesky factors of C/2 and S/2, in
/// which the energy distance is Euclidean.
class NnIndex {
 public:
  enum class Mode { Auto, BruteForce, KdTree };
  static constexpr std::size_t kBruteForceBelow = 500;

  struct Hit {
    std::size_t index = 0;
    double distance2 = 0.0;
  };

  NnIndex() = default;
  /// Uses the database's own metric.
  explicit NnIndex(MaterialDatabase db, Mode mode = Mode::Auto);
  NnIndex(MaterialDatabase db, EnergyMetric metric, Mode mode = Mode::Auto);

  Hit nearest(const PhasePoint& z) const;
  Hit nearest_brute_force(const PhasePoint& z) const;
  Hit nearest_kdtree(const PhasePoint& z) const;

  bool uses_kdtree() const { return use_tree_; }
  const MaterialDatabase& database() const { return db_; }
  const EnergyMetric& metric() const { return metric_; }
  const PhasePoint& point(std::size_t i) const { return db_.points[i]; }
  std::size_t size() const { return db_.size(); }

 private:
  Vector transform(const PhasePoint& z) const;

  MaterialDatabase db_;
  EnergyMetric metric_;
  DenseMatrix rc_, rs_;  // upper Cholesky factors of C/2 and S/2
  KdTree tree_;
  bool use_tree_ = false;
};

/// Returns the database member closest to z; ties go to the lowest index.
PhasePoint nn_project(const PhasePoint& z, const NnIndex& index);

/// Closest point of the hyperplane sig = K eps to `mapped` in the Euclidean
/// norm: eps = (eps# + K^-1 sig#)/2, sig = (sig# + K eps#)/2.  Exact for K = I.
PhasePoint hyperplane_project(const PhasePoint& mapped, const SpdMatrixSmall& k);

class ManifoldProjector {
 public:
  ManifoldProjector() = default;
  explicit ManifoldProjector(EmbeddingModel model);

  int m() const { return model_.net.width() / 2; }
  const EmbeddingModel& model() const { return model_; }

  /// Physical point to embedding coordinates: F(normalize(z)).
  PhasePoint map_forward(const PhasePoint& z) const;
  /// Embedding coordinates to physical point: denormalize(F^-1(y)).
  PhasePoint map_backward(const PhasePoint& y) const;

  PhasePoint project(const PhasePoint& z) const;
  /// |sig# - K eps#| at the mapped point.
  double residual(const PhasePoint& z) const;

 private:
  EmbeddingModel model_;
};

PhasePoint manifold_project(const PhasePoint& z, const ManifoldProjector& projector);
double hyperplane_residual(const PhasePoint& z, const ManifoldProjector& projector);

/// F^-1(alpha F(za) + (1 - alpha) F(zb)) in physical units.  alpha in [0, 1].
PhasePoint convex_interpolate(const PhasePoint& za, const PhasePoint& zb, double alpha,
                              const ManifoldProjector& projector);

}  // namespace ddmech
