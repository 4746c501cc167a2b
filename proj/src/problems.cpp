#include "ddmech/problems.hpp"

#include <cmath>
#include <numbers>

#include "ddmech/phasespace.hpp"

namespace ddmech::problems {

using std::numbers::pi;

double bar_exact_u(double x) { return 0.01 * x * x; }
double bar_exact_strain(double x) { return 0.02 * x; }
double bar_tip_force() { return laws::kBarAlphaM * std::tanh(laws::kBarAlphaS * bar_exact_strain(1.0)); }

Mesh bar_mesh(int n_elements) {
  Mesh mesh = meshes::bar(n_elements);
  mesh.neumann.push_back({mesh.dof(n_elements, 0), bar_tip_force()});
  const double k = laws::kBarAlphaS * 0.02;
  mesh.body_load = integrate_bar_load(
      mesh,
      [k](double x) {
        const double c = std::cosh(k * x);
        return -laws::kBarAlphaM * k / (c * c);
      },
      8);
  return mesh;
}

Mesh truss_mesh() { return meshes::truss_tower(1.0); }

double truss_load(int step) {
  const double n = kTrussLoadSteps;
  if (step <= kTrussLoadSteps) return -kTrussPeakForce * step / n;
  return -kTrussPeakForce + 2.0 * kTrussPeakForce * (step - n) / (2.0 * n);
}

double heat_exact_t(double x, double y) { return 0.5 * std::sin(2.0 * pi * x) * y * (1.0 - y); }

std::array<double, 2> heat_exact_gradient(double x, double y) {
  return {pi * std::cos(2.0 * pi * x) * y * (1.0 - y), 0.5 * std::sin(2.0 * pi * x) * (1.0 - 2.0 * y)};
}

double heat_source(double x, double y) {
  const auto g = heat_exact_gradient(x, y);
  const double txx = -2.0 * pi * pi * std::sin(2.0 * pi * x) * y * (1.0 - y);
  const double tyy = -std::sin(2.0 * pi * x);
  const double cx = std::cosh(g[0]), cy = std::cosh(g[1]);
  return -(txx / (cx * cx) + tyy / (cy * cy));
}

Mesh heat_mesh(int nx, int ny) {
  Mesh mesh = meshes::rectangle(nx, ny, 1);
  const double tol = 1e-12;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const double x = mesh.nodes[n][0], y = mesh.nodes[n][1];
    if (x < tol || x > 1.0 - tol || y < tol || y > 1.0 - tol) {
      mesh.dirichlet.push_back({n, heat_exact_t(x, y)});
    }
  }
  mesh.body_load = integrate_triangle_source(mesh, heat_source, 6);
  return mesh;
}

Mesh plate_mesh() { return meshes::plate_with_hole(24, 11, 0.15); }

}  // namespace ddmech::problems
