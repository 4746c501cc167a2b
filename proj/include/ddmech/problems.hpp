#pragma once

// Boundary value problems of the benchmark suite with their loads and
// closed-form solutions.

#include <array>

#include "ddmech/fem.hpp"
#include "ddmech/mesh.hpp"

namespace ddmech::problems {

// Bar of unit length and unit section fixed at x = 0 with u = 0.01 x^2
// under the tanh law: strain 0.02 x, body load -d/dx sigma and the end
// force sigma(0.02).
double bar_exact_u(double x);
double bar_exact_strain(double x);
double bar_tip_force();
Mesh bar_mesh(int n_elements = 50);

// Truss tower under an apex load; the mesh carries a unit load so that the
// load factor is the force in N (negative compresses).
Mesh truss_mesh();
inline constexpr double kTrussPeakForce = 3000.0;
inline constexpr int kTrussLoadSteps = 20;  // steps to peak; 60 in total
/// Load factor at step t of the cyclic schedule (0 .. 3 * kTrussLoadSteps).
double truss_load(int step);

// Unit square with T = 1/2 sin(2 pi x) y (1 - y) on the boundary and the
// source matching q = tanh(grad T).
double heat_exact_t(double x, double y);
std::array<double, 2> heat_exact_gradient(double x, double y);
double heat_source(double x, double y);
Mesh heat_mesh(int nx = 10, int ny = 11);

// Unit square with a centred hole of radius 0.15, bottom fixed, top moved
// up by 0.1.
Mesh plate_mesh();

}  // namespace ddmech::problems
