#pragma once

// Configuration-driven benchmark runs: database synthesis, training, the
// three solvers, error reports and plot-ready output files.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ddmech/ddsolver.hpp"
#include "ddmech/training.hpp"

namespace ddmech {

/// Names accepted in ExperimentConfig::name.
const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;  // training and solver initialisation
  std::string output_dir;  // empty: nothing is written
  /// Subset of {"manifold", "nn", "reference"}.
  std::vector<std::string> strategies = {"manifold", "nn", "reference"};

  TrainConfig training;
  InvertibleArch arch;
  SolverConfig solver;
  std::string mesh_path;  // optional mesh file replacing the generated mesh

  // Experiment-specific settings.
  bool autoencoder = false;                // bar_complete: train the autoencoder baseline
  Interval removed = {0.012, 0.024};       // bar_incomplete
  int grid_n = 10;                         // plane strain database grid per axis
  std::vector<int> nn_grids = {10, 22, 46};  // scaling_study
  int n_seeds = 10;                        // scaling_study
  int drift_cycles = 200;

  bool wants(const std::string& strategy) const;
};

/// Committed defaults for `name`.  Throws InvalidArgument for unknown names.
ExperimentConfig experiment_defaults(const std::string& name);
/// Defaults of the named experiment overridden by the keys present.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

struct SolverReport {
  std::map<std::string, double> l2_rel;  // per field
  double wall_time = 0.0;
  int outer_iters = 0;
  bool converged = true;
};

struct SeedStats {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  std::vector<double> wall_times;
  std::vector<std::string> failures;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double wall_mean = 0.0;
  double wall_std = 0.0;

  void finalize();
};

struct ErrorReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t n_data = 0;
  std::map<std::string, SolverReport> solvers;
  std::map<std::string, double> metrics;
  std::vector<SeedStats> seed_stats;
  double train_loss = -1.0;  // negative when nothing was trained
  double train_time = 0.0;

  bool all_converged() const;
  const SeedStats* stats(const std::string& label) const;
};

std::string report_json(const ErrorReport& report);

/// Runs one experiment end to end.  Solver non-convergence is recorded in
/// the report, not thrown.
ErrorReport run_experiment(const ExperimentConfig& cfg);

/// Trains the embedding only and writes it (with database and loss history)
/// to the output directory.
ErrorReport run_training_only(const ExperimentConfig& cfg);

/// Repeats the solves of a single-mesh experiment for seeds cfg.seed ..
/// cfg.seed + n_seeds - 1 (solver initialisation; the embedding is trained
/// once) and reports the displacement-error statistics per strategy.
ErrorReport run_seed_sweep(const ExperimentConfig& cfg, int n_seeds);

/// Relative L2 difference per column group of two field files of `mesh`,
/// measured against the first file.  Rows are matched by id.
ErrorReport compare_fields(const std::string& a_csv, const std::string& b_csv, const Mesh& mesh);

/// The generated mesh of an experiment.
Mesh experiment_mesh(const std::string& name);

/// Worker threads allowed for fan-out: DDMECH_THREADS if set, else the
/// hardware concurrency.
int thread_budget();

}  // namespace ddmech
