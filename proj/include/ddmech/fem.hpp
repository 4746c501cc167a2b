#pragma once

// Global step of the data-driven solver and a conventional Newton solver
// for the same meshes.  All elements use a single quadrature point, so
// quadrature points and elements coincide.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddmech/mesh.hpp"
#include "ddmech/numkernel.hpp"
#include "ddmech/phasespace.hpp"

namespace ddmech {

/// eps = B u_e at the element's quadrature point.
struct ElementOperator {
  DenseMatrix b;          // m x (nodes * dofs_per_node)
  std::vector<int> dofs;  // global dofs of u_e
  double weight = 0.0;    // quadrature weight times measure times section
};

/// Throws DegenerateElement when the element measure is not positive.
ElementOperator strain_operator(const Mesh& mesh, int element);
std::vector<ElementOperator> strain_operators(const Mesh& mesh);

std::array<double, 3> element_centroid(const Mesh& mesh, int element);

struct QuadState {
  PhasePoint mech;  // compatible and in equilibrium
  PhasePoint mat;   // taken from the material data
  double weight = 0.0;
};

struct Field {
  Vector u;
  Vector beta;
};

/// Partition of the dofs into free and prescribed ones.
class DofMap {
 public:
  DofMap() = default;
  explicit DofMap(const Mesh& mesh);

  int num_dofs() const { return static_cast<int>(free_index_.size()); }
  int num_free() const { return num_free_; }
  /// -1 for prescribed dofs.
  int free_index(int dof) const { return free_index_[static_cast<std::size_t>(dof)]; }
  /// Full vector with the prescribed values scaled by `factor`.
  Vector prescribed(double factor) const;
  Vector restrict_free(const Vector& full) const;
  /// Scatters free values into a copy of `base`.
  Vector expand(const Vector& free, const Vector& base) const;

 private:
  std::vector<int> free_index_;
  Vector prescribed_;
  int num_free_ = 0;
};

/// Reduced system for u: (sum w B^T C B) u = sum w B^T C eps*, with the
/// prescribed displacements (scaled by `dirichlet_factor`) eliminated.
SparseSystem assemble_global_u(const Mesh& mesh, const std::vector<QuadState>& states,
                               const SpdMatrixSmall& c, double dirichlet_factor = 1.0);
/// Reduced system for beta: (sum w B^T S^-1 B) beta = f_ext - sum w B^T sig*,
/// beta = 0 on prescribed dofs.
SparseSystem assemble_global_beta(const Mesh& mesh, const std::vector<QuadState>& states,
                                  const SpdMatrixSmall& s, const Vector& external_load);

/// Both global solves share one matrix; it is factorised once and reused.
class GlobalStep {
 public:
  /// Keeps a reference to `mesh`.
  GlobalStep(const Mesh& mesh, const SpdMatrixSmall& c);

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<ElementOperator>& operators() const { return ops_; }
  const DofMap& dof_map() const { return dofs_; }
  const SpdMatrixSmall& c() const { return c_; }

  /// Fresh states with quadrature weights set and zero phase points.
  std::vector<QuadState> make_states() const;

  Vector solve_u(const std::vector<QuadState>& states, double dirichlet_factor = 1.0) const;
  Vector solve_beta(const std::vector<QuadState>& states, const Vector& external_load) const;
  /// Solves both systems and updates the mechanical states.
  Field solve(std::vector<QuadState>& states, const Vector& external_load,
              double dirichlet_factor = 1.0) const;

  /// Free-dof residual f_ext - sum w B^T sig of the mechanical stresses.
  Vector equilibrium_residual(const std::vector<QuadState>& states, const Vector& external_load) const;

 private:
  Vector internal_force(const std::vector<QuadState>& states, bool material) const;

  const Mesh* mesh_;
  SpdMatrixSmall c_;
  std::vector<ElementOperator> ops_;
  DofMap dofs_;
  SparseMatrix k_full_;
  SpdFactorization factor_;
};

/// eps = B u, sig = sig* + S^-1 B beta at every quadrature point.
void stress_update(const Mesh& mesh, std::vector<QuadState>& states, const Field& field,
                   const SpdMatrixSmall& s);

struct ReferenceOptions {
  double tol = 1e-10;  // on the free-dof residual norm
  int max_newton = 30;
  int max_bisections = 20;
};

struct ReferenceResult {
  Field field;
  std::vector<QuadState> states;    // mech == mat == (eps, sig(eps))
  std::vector<double> residuals;    // residual norms of the final load step
  int newton_iterations = 0;        // over all load steps
  int load_steps = 0;
};

/// Newton iteration on sum w B^T sig(B u) = f_ext with load bisection on
/// failure.  Throws NoConvergence when bisection is exhausted.
ReferenceResult reference_solve(const Mesh& mesh, const MaterialLaw& law,
                                const ReferenceOptions& opts = {}, double load_factor = 1.0);

/// |a - b| / |b| in the Euclidean norm (0 when both vanish).
double relative_l2(const Vector& a, const Vector& b);

/// Integrated L2 error of a nodal scalar field against `exact` on a scalar
/// triangle mesh or a bar: returns {|u_h - u|, |u|}.
struct L2Pair {
  double error = 0.0;
  double norm = 0.0;
  double relative() const { return norm > 0.0 ? error / norm : error; }
};
L2Pair l2_error_nodal(const Mesh& mesh, const Vector& u, const ScalarField2d& exact, int order = 5);

/// Weighted quadrature-point error of eps or sig against per-point exact
/// values: sqrt(sum w |x_h - x|^2) and sqrt(sum w |x|^2).
L2Pair l2_error_quad(const std::vector<QuadState>& states, const std::vector<Vector>& exact,
                     bool stress);

void write_nodal_csv(std::ostream& out, const Mesh& mesh, const Field& field);
void write_nodal_csv(const std::string& path, const Mesh& mesh, const Field& field);
/// Mechanical states by default, material states when `material` is set.
void write_quad_csv(std::ostream& out, const Mesh& mesh, const std::vector<QuadState>& states,
                    bool material = false);
void write_quad_csv(const std::string& path, const Mesh& mesh, const std::vector<QuadState>& states,
                    bool material = false);

}  // namespace ddmech
