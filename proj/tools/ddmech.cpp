#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ddmech/experiments.hpp"
#include "ddmech/mesh.hpp"

namespace {

using namespace ddmech;

void print_report(const ErrorReport& r) {
  std::printf("experiment %s  seed %llu  n_data %zu\n", r.experiment.c_str(),
              static_cast<unsigned long long>(r.seed), r.n_data);
  if (r.train_loss >= 0.0) std::printf("training   final loss %.3e  (%.2f s)\n", r.train_loss, r.train_time);
  for (const auto& [name, s] : r.solvers) {
    std::printf("%-10s", name.c_str());
    for (const auto& [field, e] : s.l2_rel) std::printf("  %s %.4e", field.c_str(), e);
    std::printf("  iters %d  %.3f s%s\n", s.outer_iters, s.wall_time, s.converged ? "" : "  NOT CONVERGED");
  }
  for (const auto& s : r.seed_stats) {
    std::printf("%-16s mean %.4e  std %.4e  wall %.3f +- %.3f s  (%zu seeds)\n", s.label.c_str(), s.mean, s.std,
                s.wall_mean, s.wall_std, s.values.size());
    for (const auto& f : s.failures) std::printf("  failure: %s\n", f.c_str());
  }
  for (const auto& [k, v] : r.metrics) std::printf("%-36s %.6g\n", k.c_str(), v);
}

int finish(const ErrorReport& r) {
  print_report(r);
  return r.all_converged() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddmech: data-driven mechanics with learned embeddings"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string strategy, out;
  auto* run = app.add_subcommand("run", "Run an experiment end to end");
  run->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--strategy", strategy, "Run a single solver")->check(CLI::IsMember({"nn", "manifold", "reference"}));
  run->add_option("--out", out, "Output directory");

  auto* train = app.add_subcommand("train", "Train the embedding only");
  train->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--out", out, "Output directory");

  int n_seeds = 0;
  auto* sweep = app.add_subcommand("sweep", "Repeat solves over seeds");
  sweep->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seeds", n_seeds, "Number of seeds")->required();
  sweep->add_option("--seed", seed, "First seed");
  sweep->add_option("--strategy", strategy, "Sweep a single solver")->check(CLI::IsMember({"nn", "manifold"}));
  sweep->add_option("--out", out, "Output directory");

  std::string a_csv, b_csv, mesh_path;
  auto* compare = app.add_subcommand("compare", "Relative L2 difference of two field files");
  compare->add_option("a", a_csv, "Field CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("b", b_csv, "Field CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--mesh", mesh_path, "Mesh JSON")->required()->check(CLI::ExistingFile);

  std::string mesh_name, mesh_out;
  auto* mesh_cmd = app.add_subcommand("mesh", "Write a built-in experiment mesh");
  mesh_cmd->add_option("experiment", mesh_name, "Experiment name")->required();
  mesh_cmd->add_option("output", mesh_out, "Output mesh JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      ExperimentConfig cfg = load_experiment_config(config);
      if (seed) cfg.seed = *seed;
      if (!strategy.empty()) cfg.strategies = {strategy};
      if (!out.empty()) cfg.output_dir = out;
      return cfg;
    };
    if (*run) return finish(run_experiment(load()));
    if (*train) return finish(run_training_only(load()));
    if (*sweep) return finish(run_seed_sweep(load(), n_seeds));
    if (*compare) {
      const ErrorReport r = compare_fields(a_csv, b_csv, read_mesh_json(mesh_path));
      for (const auto& [field, e] : r.solvers.at("compare").l2_rel) std::printf("%s %.6e\n", field.c_str(), e);
      return 0;
    }
    if (*mesh_cmd) {
      write_mesh_json(mesh_out, experiment_mesh(mesh_name));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::NotConverged || e.kind() == ErrorKind::NoConvergence ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
