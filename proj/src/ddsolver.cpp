#include "ddmech/ddsolver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <utility>

namespace ddmech {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// max of the relative changes of the strain block and the stress block.  The
/// block norms are floored at `floor_e` and `floor_s`.
double relative_change(const std::vector<QuadState>& prev, const std::vector<QuadState>& next,
                       double floor_e, double floor_s) {
  double de = 0.0, ne = 0.0, ds = 0.0, ns = 0.0;
  for (std::size_t q = 0; q < next.size(); ++q) {
    de += (next[q].mech.eps - prev[q].mech.eps).squaredNorm();
    ds += (next[q].mech.sig - prev[q].mech.sig).squaredNorm();
    ne += next[q].mech.eps.squaredNorm();
    ns += next[q].mech.sig.squaredNorm();
  }
  auto rel = [](double d, double n, double floor) {
    const double den = std::max(std::sqrt(n), floor);
    return den > 0.0 ? std::sqrt(d) / den : std::sqrt(d);
  };
  return std::max(rel(de, ne, floor_e), rel(ds, ns, floor_s));
}

/// sqrt(n_points) times the largest strain and stress magnitudes in the data.
std::pair<double, double> data_scale(const MaterialDatabase& db, std::size_t n_points) {
  double e = 0.0, s = 0.0;
  for (const auto& p : db.points) {
    e = std::max(e, p.eps.cwiseAbs().maxCoeff());
    s = std::max(s, p.sig.cwiseAbs().maxCoeff());
  }
  const double r = std::sqrt(static_cast<double>(n_points));
  return {r * e, r * s};
}

}  // namespace

std::string to_string(LocalStrategy s) {
  return s == LocalStrategy::NearestNeighbor ? "nn" : "manifold";
}

LocalStrategy local_strategy_from_string(const std::string& s) {
  if (s == "nn" || s == "nearest") return LocalStrategy::NearestNeighbor;
  if (s == "manifold") return LocalStrategy::Manifold;
  throw Error(ErrorKind::InvalidArgument, "unknown local strategy: " + s);
}

void SolverConfig::validate() const {
  if (!(tol_rel > 0.0)) throw Error(ErrorKind::InvalidArgument, "tol_rel must be positive");
  if (max_outer_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_outer_iters must be >= 1");
}

LocalStrategy LocalProjector::strategy() const {
  if ((nn == nullptr) == (manifold == nullptr)) {
    throw Error(ErrorKind::InvalidArgument, "exactly one local projection must be set");
  }
  return nn ? LocalStrategy::NearestNeighbor : LocalStrategy::Manifold;
}

double functional_value(const std::vector<QuadState>& states, const EnergyMetric& metric) {
  double f = 0.0;
  for (const auto& s : states) f += s.weight * energy_distance2(s.mech, s.mat, metric);
  return f;
}

DDResult dd_solve(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                  const SolverConfig& cfg, LoadStep step) {
  if (db.empty()) throw Error(ErrorKind::InvalidArgument, "dd_solve: empty database");
  if (db.m != mesh.m()) throw Error(ErrorKind::DimensionMismatch, "dd_solve: database and mesh widths differ");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, db.size() - 1);
  std::vector<QuadState> init(static_cast<std::size_t>(mesh.num_elements()));
  std::vector<std::size_t> assignment(init.size());
  for (std::size_t q = 0; q < init.size(); ++q) {
    assignment[q] = pick(rng);
    init[q].mat = db.points[assignment[q]];
  }
  return dd_solve_from(mesh, db, local, cfg, step, std::move(init), std::move(assignment));
}

DDResult dd_solve_from(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                       const SolverConfig& cfg, LoadStep step, std::vector<QuadState> init,
                       std::vector<std::size_t> init_assignment) {
  cfg.validate();
  const LocalStrategy strategy = local.strategy();
  if (db.m != mesh.m()) throw Error(ErrorKind::DimensionMismatch, "dd_solve: database and mesh widths differ");
  if (strategy == LocalStrategy::Manifold && local.manifold->m() != db.m) {
    throw Error(ErrorKind::DimensionMismatch, "dd_solve: projector width differs from database");
  }
  if (static_cast<int>(init.size()) != mesh.num_elements()) {
    throw Error(ErrorKind::DimensionMismatch, "dd_solve: one initial state per element expected");
  }
  const auto t0 = Clock::now();
  const GlobalStep global(mesh, db.metric.C);
  const EnergyMetric& metric = db.metric;
  const Vector f_ext = mesh.external_load(step.load_factor);

  DDResult res;
  res.states = global.make_states();
  for (std::size_t q = 0; q < init.size(); ++q) res.states[q].mat = init[q].mat;
  res.assignment = std::move(init_assignment);
  if (strategy == LocalStrategy::NearestNeighbor && res.assignment.size() != res.states.size()) {
    res.assignment.assign(res.states.size(), static_cast<std::size_t>(-1));
  }

  const auto [floor_e, floor_s] = data_scale(db, res.states.size());
  std::vector<QuadState> prev;
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    res.field = global.solve(res.states, f_ext, step.dirichlet_factor);

    int changed = 0;
    bool done = false;
    if (strategy == LocalStrategy::NearestNeighbor) {
      for (std::size_t q = 0; q < res.states.size(); ++q) {
        const std::size_t idx = local.nn->nearest(res.states[q].mech).index;
        if (idx != res.assignment[q]) ++changed;
        res.assignment[q] = idx;
        res.states[q].mat = local.nn->point(idx);
      }
      done = changed == 0;
    } else {
      for (auto& s : res.states) {
        PhasePoint z = local.manifold->project(s.mech);
        const double scale = std::max(z.stacked().norm(), 1e-300);
        if ((z.stacked() - s.mat.stacked()).norm() > cfg.tol_rel * scale) ++changed;
        s.mat = std::move(z);
      }
      done = !prev.empty() && relative_change(prev, res.states, floor_e, floor_s) <= cfg.tol_rel;
      prev = res.states;
    }

    const double f = functional_value(res.states, metric);
    res.history.push_back(f);
    res.log.push_back({it, f, changed, ms_since(t0)});
    res.outer_iters = it;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.wall_time = ms_since(t0) / 1000.0;
  if (!res.converged) {
    throw NotConvergedError("data-driven iteration hit the cap of " + std::to_string(cfg.max_outer_iters) +
                                " outer iterations",
                            std::move(res));
  }
  return res;
}

PathResult dd_solve_path(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                         const SolverConfig& cfg, int monitor_dof) {
  if (cfg.load_steps.empty()) throw Error(ErrorKind::InvalidArgument, "dd_solve_path: empty load schedule");
  if (monitor_dof < 0 || monitor_dof >= mesh.num_dofs()) {
    throw Error(ErrorKind::InvalidArgument, "dd_solve_path: monitor dof out of range");
  }
  const Vector f_unit = mesh.external_load(1.0);
  PathResult path;
  for (std::size_t k = 0; k < cfg.load_steps.size(); ++k) {
    const LoadStep& step = cfg.load_steps[k];
    DDResult r;
    try {
      if (k == 0) {
        r = dd_solve(mesh, db, local, cfg, step);
      } else {
        const DDResult& last = path.steps.back();
        r = dd_solve_from(mesh, db, local, cfg, step, last.states, last.assignment);
      }
    } catch (const NotConvergedError& e) {
      throw NotConvergedError("load step " + std::to_string(k) + ": " + e.what(), e.result());
    } catch (const Error& e) {
      throw Error(e.kind(), "load step " + std::to_string(k) + ": " + e.what());
    }
    path.force.push_back(step.load_factor * f_unit(monitor_dof));
    path.displacement.push_back(r.field.u(monitor_dof));
    path.steps.push_back(std::move(r));
  }
  return path;
}

double loop_area(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "loop_area: size mismatch");
  double a = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t j = (i + 1) % x.size();
    a += x[i] * y[j] - x[j] * y[i];
  }
  return 0.5 * std::abs(a);
}

double path_work(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "path_work: size mismatch");
  double w = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) w += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return w;
}

void write_iteration_log_csv(std::ostream& out, const DDResult& result) {
  out << "outer_iter,functional,n_changed_assignments,wall_ms\n";
  char buf[96];
  for (const auto& r : result.log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%.3f\n", r.outer_iter, r.functional, r.n_changed, r.wall_ms);
    out << buf;
  }
}

void write_iteration_log_csv(const std::string& path, const DDResult& result) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_iteration_log_csv(out, result);
}

}  // namespace ddmech
