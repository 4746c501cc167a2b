#pragma once

// Alternating fixed-point data-driven solver: global projection onto
// compatible, balanced states followed by local projection onto the data.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddmech/error.hpp"
#include "ddmech/fem.hpp"
#include "ddmech/projection.hpp"

namespace ddmech {

enum class LocalStrategy { NearestNeighbor, Manifold };

std::string to_string(LocalStrategy s);
LocalStrategy local_strategy_from_string(const std::string& s);

/// Scales applied to the mesh loads and prescribed values at one step.
struct LoadStep {
  double load_factor = 1.0;
  double dirichlet_factor = 1.0;
};

struct SolverConfig {
  LocalStrategy strategy = LocalStrategy::NearestNeighbor;
  int max_outer_iters = 200;
  double tol_rel = 1e-8;
  std::uint64_t seed = 0;
  std::vector<LoadStep> load_steps;  // used by dd_solve_path

  void validate() const;
};

/// The local projection in use; exactly one member is set.
struct LocalProjector {
  const NnIndex* nn = nullptr;
  const ManifoldProjector* manifold = nullptr;

  static LocalProjector nearest(const NnIndex& index) { return {&index, nullptr}; }
  static LocalProjector embedded(const ManifoldProjector& p) { return {nullptr, &p}; }
  LocalStrategy strategy() const;
};

struct IterationRecord {
  int outer_iter = 0;
  double functional = 0.0;
  int n_changed = 0;  // NN: reassigned points; manifold: points that moved
  double wall_ms = 0.0;
};

struct DDResult {
  Field field;
  std::vector<QuadState> states;
  std::vector<std::size_t> assignment;  // database index per point (NN only)
  int outer_iters = 0;
  bool converged = false;
  std::vector<double> history;          // functional after each local step
  std::vector<IterationRecord> log;
  double wall_time = 0.0;               // seconds
};

/// Raised when the iteration cap is hit; carries the last iterate.
class NotConvergedError : public Error {
 public:
  NotConvergedError(const std::string& what, DDResult result)
      : Error(ErrorKind::NotConverged, what), result_(std::move(result)) {}
  const DDResult& result() const { return result_; }

 private:
  DDResult result_;
};

/// sum_q w_q d^2(mech_q, mat_q)
double functional_value(const std::vector<QuadState>& states, const EnergyMetric& metric);

/// Solves one load level starting from material states drawn uniformly from
/// the database (seeded).  Throws NotConvergedError at the iteration cap.
DDResult dd_solve(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                  const SolverConfig& cfg, LoadStep step = {});

/// Same as dd_solve but starting from the given material states.
DDResult dd_solve_from(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                       const SolverConfig& cfg, LoadStep step, std::vector<QuadState> init,
                       std::vector<std::size_t> init_assignment = {});

struct PathResult {
  std::vector<DDResult> steps;
  std::vector<double> force;         // applied load at the monitored dof
  std::vector<double> displacement;  // solution at the monitored dof
};

/// Follows cfg.load_steps, warm-starting every step from the previous
/// material states.  A step that fails is reported with its index.
PathResult dd_solve_path(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                         const SolverConfig& cfg, int monitor_dof);

/// Enclosed area of the closed polygon (x_i, y_i) (shoelace formula).
double loop_area(const std::vector<double>& x, const std::vector<double>& y);
/// Trapezoidal integral of y dx.
double path_work(const std::vector<double>& x, const std::vector<double>& y);

/// Header `outer_iter,functional,n_changed_assignments,wall_ms`.
void write_iteration_log_csv(std::ostream& out, const DDResult& result);
void write_iteration_log_csv(const std::string& path, const DDResult& result);

}  // namespace ddmech
