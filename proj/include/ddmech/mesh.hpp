#pragma once

// Discretisations used by the solvers: 2-node bars and trusses and 3-node
// triangles, with Dirichlet data and a precomputed external load vector.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddmech/numkernel.hpp"

namespace ddmech {

enum class MeshKind { Bar1d, Truss3d, Tri2d };

std::string to_string(MeshKind kind);
MeshKind mesh_kind_from_string(const std::string& s);

struct Element {
  std::vector<int> nodes;
  double section = 1.0;  // cross-section area (bar, truss) or thickness (triangle)
};

struct DofValue {
  int dof = 0;
  double value = 0.0;
};

struct Mesh {
  MeshKind kind = MeshKind::Bar1d;
  /// Bar and truss: 1 and 3.  Triangles: 1 (scalar field) or 2 (plane strain).
  int dofs_per_node = 1;
  std::vector<std::array<double, 3>> nodes;  // unused coordinates are zero
  std::vector<Element> elements;
  std::vector<DofValue> dirichlet;
  std::vector<DofValue> neumann;  // nodal point loads
  Vector body_load;               // consistent nodal body load, empty for none

  int spatial_dim() const;
  /// Width of the generalised strain vector at a quadrature point.
  int m() const;
  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_dofs() const { return num_nodes() * dofs_per_node; }
  int dof(int node, int component) const { return node * dofs_per_node + component; }
  std::vector<int> element_dofs(int e) const;

  /// Point loads plus body load, scaled by `load_factor`.
  Vector external_load(double load_factor = 1.0) const;

  /// Throws InvalidArgument on bad connectivity or duplicate Dirichlet dofs.
  void validate() const;
};

/// Gauss-Legendre rule on [0, 1].
struct QuadRule1d {
  std::vector<double> x, w;
};
QuadRule1d gauss_legendre(int n);

/// Rule on the reference triangle (0,0), (1,0), (0,1) from a collapsed
/// n x n Gauss product; exact for polynomials of degree 2n - 2.  Weights sum
/// to 1/2.
struct QuadRuleTri {
  std::vector<std::array<double, 2>> xi;
  std::vector<double> w;
};
QuadRuleTri triangle_rule(int n);

using ScalarField2d = std::function<double(double, double)>;
using ScalarField1d = std::function<double(double)>;

/// Consistent nodal load of a distributed bar load q(x) (force per length).
Vector integrate_bar_load(const Mesh& mesh, const ScalarField1d& q, int gauss_points = 5);
/// Consistent nodal load of a scalar source s(x, y) on linear triangles.
Vector integrate_triangle_source(const Mesh& mesh, const ScalarField2d& s, int order = 5);

namespace meshes {

/// Uniform bar on [0, length] fixed at x = 0.
Mesh bar(int n_elements, double length = 1.0, double section = 1.0);

/// Tower truss: four fixed base nodes, a four-node ring above them and an
/// apex.  The apex carries a vertical load `apex_load` (negative compresses).
Mesh truss_tower(double apex_load = 0.0, double section = 1.0);
/// Dof carrying the apex load.
int truss_apex_dof(const Mesh& truss);

/// Structured triangulation of [x0, x1] x [y0, y1], two triangles per cell.
Mesh rectangle(int nx, int ny, int dofs_per_node, double x0 = 0.0, double x1 = 1.0,
               double y0 = 0.0, double y1 = 1.0);

/// Unit square with a centred circular hole, O-grid triangulation with
/// n_theta cells around the hole (multiple of 8) and n_r cells radially.
Mesh plate_with_hole(int n_theta = 24, int n_r = 11, double radius = 0.15);

}  // namespace meshes

void write_mesh_json(std::ostream& out, const Mesh& mesh);
void write_mesh_json(const std::string& path, const Mesh& mesh);
Mesh read_mesh_json(std::istream& in);
Mesh read_mesh_json(const std::string& path);

}  // namespace ddmech
