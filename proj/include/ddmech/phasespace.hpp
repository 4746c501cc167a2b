#pragma once

// Phase-space data model: strain/stress pairs, material databases, the
// synthetic database generators and the min-max normalisation.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddmech/numkernel.hpp"

namespace ddmech {

/// A point z = (eps, sig) of phase space.  eps holds generalised strain
/// (Voigt, engineering shear) or temperature gradient; sig the conjugate
/// stress or heat flux.
struct PhasePoint {
  Vector eps;
  Vector sig;

  PhasePoint() = default;
  PhasePoint(Vector e, Vector s) : eps(std::move(e)), sig(std::move(s)) {}

  int m() const { return static_cast<int>(eps.size()); }
  /// [eps; sig]
  Vector stacked() const;
  static PhasePoint from_stacked(const Vector& z);
};

/// Energy-type metric |z|^2 = 1/2 eps.C.eps + 1/2 sig.S.sig with S = C^-1.
struct EnergyMetric {
  SpdMatrixSmall C;
  SpdMatrixSmall S;

  EnergyMetric() = default;
  explicit EnergyMetric(SpdMatrixSmall c) : C(std::move(c)), S(C.inverse()) {}
  int m() const { return C.dim(); }
};

/// Componentwise affine map of [min, max] onto [floor, 1].  A default
/// constructed transform is the identity.
class NormalizationTransform {
 public:
  static constexpr double kDefaultFloor = 1e-3;

  NormalizationTransform() = default;
  static NormalizationTransform fit(const std::vector<PhasePoint>& points,
                                    double floor = kDefaultFloor);

  bool is_identity() const { return eps_min.size() == 0; }
  PhasePoint apply(const PhasePoint& z) const;
  PhasePoint invert(const PhasePoint& z) const;

  /// d(normalised)/d(physical) per component, stacked [eps; sig].
  Vector scale() const;

  Vector eps_min, eps_max, sig_min, sig_max;
  double floor = kDefaultFloor;
};

struct MaterialDatabase {
  std::vector<PhasePoint> points;
  int m = 0;
  NormalizationTransform norm;  // identity unless produced by normalize()
  EnergyMetric metric;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool normalized() const { return !norm.is_identity(); }
};

/// Voigt packing for symmetric second-order tensors.  Strains carry
/// engineering shear (gamma = 2 eps_ij), stresses do not, so the Voigt dot
/// product equals the double contraction.
struct VoigtConvention {
  int dim = 1;

  int m() const { return dim * (dim + 1) / 2; }
  double shear_scaling() const { return 2.0; }
  Vector strain_to_voigt(const DenseMatrix& eps) const;
  Vector stress_to_voigt(const DenseMatrix& sig) const;
  DenseMatrix strain_from_voigt(const Vector& eps) const;
  DenseMatrix stress_from_voigt(const Vector& sig) const;
  static double double_contraction(const Vector& eps_voigt, const Vector& sig_voigt) {
    return eps_voigt.dot(sig_voigt);
  }
};

/// Analytic constitutive law used to synthesise data and as the ground truth
/// for the model-based solver.
struct MaterialLaw {
  int m = 0;
  std::function<Vector(const Vector&)> stress;
  std::function<DenseMatrix(const Vector&)> tangent;
};

namespace laws {

inline constexpr double kBarAlphaM = 1000.0;  // MPa
inline constexpr double kBarAlphaS = 60.0;
inline constexpr double kBarModulus = 42694.67;  // C = S^-1 for bar and truss, MPa
inline constexpr double kHeatModulus = 0.42;

MaterialLaw bar_tanh(double alpha_m = kBarAlphaM, double alpha_s = kBarAlphaS);
MaterialLaw sqrt_toy();
MaterialLaw heat_tanh();
MaterialLaw planestrain();
MaterialLaw linear(const DenseMatrix& c);

/// Strain energy of the plane-strain law; eps in Voigt form (engineering shear).
double planestrain_energy(const Vector& eps);
Vector planestrain_stress(const Vector& eps);
DenseMatrix planestrain_tangent(const Vector& eps);
/// Central-difference Hessian of the energy via differences of the stress.
DenseMatrix planestrain_tangent_fd(const Vector& eps, double step = 1e-6);

}  // namespace laws

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

MaterialDatabase gen_bar_tanh(int n = 41, Interval eps_range = {-0.03, 0.03});
/// The 41-point bar database without the points whose |eps| falls in
/// `removed`.  An empty interval (lo > hi) removes nothing.
MaterialDatabase gen_bar_incomplete(Interval removed = {0.012, 0.024});
MaterialDatabase gen_sqrt_toy(int n = 20);
MaterialDatabase gen_heat_tanh(int grid_n = 20);

struct PlaneStrainGrid {
  int n11 = 10;
  int n22 = 10;
  int n12 = 10;
  Interval eps11 = {-0.335, 0.0155};
  Interval eps22 = {0.12, 1.0};
  Interval eps12 = {-0.03, 0.03};  // tensor shear component
};
MaterialDatabase gen_planestrain(const PlaneStrainGrid& grid = {});

/// Returns a copy mapped componentwise into [floor, 1] with the transform
/// recorded in `norm`.  The metric is carried over unchanged.
MaterialDatabase normalize(const MaterialDatabase& db,
                           double floor = NormalizationTransform::kDefaultFloor);

void write_database_csv(std::ostream& out, const MaterialDatabase& db);
void write_database_csv(const std::string& path, const MaterialDatabase& db);
/// Reads points only; the metric must be attached by the caller.
MaterialDatabase read_database_csv(std::istream& in);
MaterialDatabase read_database_csv(const std::string& path);

}  // namespace ddmech
