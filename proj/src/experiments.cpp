#include "ddmech/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ddmech/problems.hpp"

namespace ddmech {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_one_of(const std::string& s, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (s == n) return true;
  }
  return false;
}

std::string out_file(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

/// Runs fn(i) for i in [0, n) on up to thread_budget() workers.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(thread_budget()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Problem set-up

bool single_mesh(const std::string& name) {
  return is_one_of(name, {"bar_complete", "bar_incomplete", "heat2d", "planestrain_hole", "scaling_study"});
}

MaterialDatabase database_for(const ExperimentConfig& cfg, int grid_n) {
  const std::string& n = cfg.name;
  if (n == "toy_sqrt") return gen_sqrt_toy(20);
  if (n == "bar_complete" || n == "truss_cyclic") return gen_bar_tanh();
  if (n == "bar_incomplete") return gen_bar_incomplete(cfg.removed);
  if (n == "heat2d") return gen_heat_tanh(20);
  PlaneStrainGrid g;
  g.n11 = g.n22 = g.n12 = grid_n;
  return gen_planestrain(g);
}

Mesh mesh_for(const ExperimentConfig& cfg) {
  if (!cfg.mesh_path.empty()) return read_mesh_json(cfg.mesh_path);
  const std::string& n = cfg.name;
  if (n == "bar_complete" || n == "bar_incomplete") return problems::bar_mesh();
  if (n == "truss_cyclic") return problems::truss_mesh();
  if (n == "heat2d") return problems::heat_mesh();
  return problems::plate_mesh();
}

MaterialLaw law_for(const std::string& name) {
  if (name == "heat2d") return laws::heat_tanh();
  if (name == "planestrain_hole" || name == "scaling_study") return laws::planestrain();
  if (name == "toy_sqrt") return laws::sqrt_toy();
  return laws::bar_tanh();
}

struct Trained {
  EmbeddingModel model;
  InvertibleTraining training;
  double seconds = 0.0;
};

Trained train(const ExperimentConfig& cfg, const MaterialDatabase& db) {
  const MaterialDatabase ndb = normalize(db);
  TrainConfig tc = cfg.training;
  tc.seed = cfg.seed;
  InvertibleArch arch = cfg.arch;
  arch.m = db.m;
  const auto t0 = Clock::now();
  Trained t;
  t.training = train_invertible(ndb, arch, tc);
  t.seconds = seconds_since(t0);
  t.model = EmbeddingModel{t.training.net, ndb.norm, SpdMatrixSmall::identity(db.m)};
  return t;
}

void write_training_artifacts(const ExperimentConfig& cfg, const MaterialDatabase& db, const Trained* t) {
  if (cfg.output_dir.empty()) return;
  write_database_csv(out_file(cfg, "database.csv"), db);
  if (t) {
    save_embedding(out_file(cfg, "net.json"), t->model);
    write_loss_history_csv(out_file(cfg, "loss_history.csv"), t->training.history);
  }
}

void prepare_output(const ExperimentConfig& cfg) {
  if (cfg.output_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + cfg.output_dir + ": " + ec.message());
  write_text(out_file(cfg, "config.json"), experiment_config_json(cfg));
}

// ---------------------------------------------------------------------------
// Solving and error evaluation on one mesh

struct Solution {
  Field field;
  std::vector<QuadState> states;
  DDResult dd;  // empty for the reference solver
  bool converged = true;
  int iters = 0;
  double seconds = 0.0;
};

Solution solve_dd(const Mesh& mesh, const MaterialDatabase& db, const LocalProjector& local,
                  SolverConfig sc, std::uint64_t seed, LoadStep step = {}) {
  sc.seed = seed;
  sc.strategy = local.strategy();
  Solution s;
  try {
    s.dd = dd_solve(mesh, db, local, sc, step);
  } catch (const NotConvergedError& e) {
    s.dd = e.result();
    s.converged = false;
  }
  s.field = s.dd.field;
  s.states = s.dd.states;
  s.iters = s.dd.outer_iters;
  s.seconds = s.dd.wall_time;
  return s;
}

Solution solve_reference(const Mesh& mesh, const MaterialLaw& law, double load_factor = 1.0) {
  const auto t0 = Clock::now();
  ReferenceResult r = reference_solve(mesh, law, {}, load_factor);
  Solution s;
  s.field = r.field;
  s.states = r.states;
  s.iters = r.newton_iterations;
  s.seconds = seconds_since(t0);
  return s;
}

/// Errors of a solution against the closed form (bar, heat) or against the
/// reference solution (plane strain).
std::map<std::string, double> field_errors(const std::string& name, const Mesh& mesh, const Solution& s,
                                           const Solution* reference) {
  std::map<std::string, double> e;
  std::vector<Vector> eps, sig;
  if (name == "bar_complete" || name == "bar_incomplete") {
    Vector ue(mesh.num_nodes());
    for (int n = 0; n < mesh.num_nodes(); ++n) ue(n) = problems::bar_exact_u(mesh.nodes[n][0]);
    e["u"] = relative_l2(s.field.u, ue);
    const MaterialLaw law = laws::bar_tanh();
    for (int q = 0; q < mesh.num_elements(); ++q) {
      Vector v(1);
      v(0) = problems::bar_exact_strain(element_centroid(mesh, q)[0]);
      eps.push_back(v);
      sig.push_back(law.stress(v));
    }
  } else if (name == "heat2d") {
    e["T"] = l2_error_nodal(mesh, s.field.u, problems::heat_exact_t).relative();
    for (int q = 0; q < mesh.num_elements(); ++q) {
      const auto c = element_centroid(mesh, q);
      const auto g = problems::heat_exact_gradient(c[0], c[1]);
      Vector v(2);
      v << g[0], g[1];
      eps.push_back(v);
      sig.push_back(v.array().tanh().matrix());
    }
  } else {
    if (!reference) throw Error(ErrorKind::InvalidArgument, "plane strain errors need the reference solution");
    e["u"] = relative_l2(s.field.u, reference->field.u);
    for (const auto& r : reference->states) {
      eps.push_back(r.mech.eps);
      sig.push_back(r.mech.sig);
    }
  }
  const std::string ek = name == "heat2d" ? "gradT" : "eps";
  const std::string sk = name == "heat2d" ? "q" : "sig";
  e[ek] = l2_error_quad(s.states, eps, false).relative();
  e[sk] = l2_error_quad(s.states, sig, true).relative();
  return e;
}

std::string primary_field(const std::string& name) { return name == "heat2d" ? "T" : "u"; }

void write_solution(const ExperimentConfig& cfg, const Mesh& mesh, const std::string& label, const Solution& s) {
  if (cfg.output_dir.empty()) return;
  write_nodal_csv(out_file(cfg, label + "_nodal.csv"), mesh, s.field);
  write_quad_csv(out_file(cfg, label + "_quad.csv"), mesh, s.states);
  if (label != "reference") {
    write_quad_csv(out_file(cfg, label + "_material.csv"), mesh, s.states, true);
    write_iteration_log_csv(out_file(cfg, label + "_iterations.csv"), s.dd);
  }
}

SolverReport make_report(const std::map<std::string, double>& errors, const Solution& s) {
  SolverReport r;
  r.l2_rel = errors;
  r.wall_time = s.seconds;
  r.outer_iters = s.iters;
  r.converged = s.converged;
  return r;
}

// ---------------------------------------------------------------------------
// Experiments

std::vector<PhasePoint> unseen_curve_points(const MaterialLaw& law, Interval range, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed + 7919);
  std::uniform_real_distribution<double> u(range.lo, range.hi);
  std::vector<PhasePoint> pts;
  for (int i = 0; i < n; ++i) {
    Vector e(1);
    e(0) = u(rng);
    pts.push_back({e, law.stress(e)});
  }
  return pts;
}

DenseMatrix normalized_columns(const NormalizationTransform& norm, const std::vector<PhasePoint>& pts) {
  std::vector<PhasePoint> n;
  for (const auto& p : pts) n.push_back(norm.apply(p));
  return stack_points(n);
}

ErrorReport run_toy(const ExperimentConfig& cfg) {
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  const Trained t = train(cfg, db);
  rep.train_loss = t.training.final_loss;
  rep.train_time = t.seconds;
  write_training_artifacts(cfg, db, &t);
  const ManifoldProjector proj(t.model);

  Vector qe(1), qs(1);
  qe(0) = 0.61;
  qs(0) = 0.67;
  const PhasePoint query{qe, qs};
  std::vector<std::size_t> winners;
  for (double c : {0.01, 1.0, 100.0}) {
    const NnIndex idx(db, EnergyMetric(SpdMatrixSmall::scaled_identity(1, c)));
    const std::size_t w = idx.nearest(query).index;
    winners.push_back(w);
    char key[32];
    std::snprintf(key, sizeof key, "nn_index_c%g", c);
    rep.metrics[key] = static_cast<double>(w);
  }
  std::sort(winners.begin(), winners.end());
  rep.metrics["nn_distinct_winners"] =
      static_cast<double>(std::unique(winners.begin(), winners.end()) - winners.begin());

  const PhasePoint p = proj.project(query);
  rep.metrics["projection_eps"] = p.eps(0);
  rep.metrics["projection_sig"] = p.sig(0);
  rep.metrics["projection_curve_distance"] = std::abs(p.sig(0) - std::sqrt(std::max(p.eps(0), 0.0)));

  const PhasePoint& za = db.points[1];
  const PhasePoint& zb = db.points.back();
  double emb = 0.0, raw = 0.0;
  std::ostringstream interp;
  interp << "alpha,eps_embedded,sig_embedded,eps_raw,sig_raw\n";
  for (double a : {0.2, 0.4, 0.6, 0.8}) {
    const PhasePoint zi = convex_interpolate(za, zb, a, proj);
    const Vector re = a * za.eps + (1.0 - a) * zb.eps;
    const Vector rs = a * za.sig + (1.0 - a) * zb.sig;
    emb = std::max(emb, std::abs(zi.sig(0) - std::sqrt(std::max(zi.eps(0), 0.0))));
    raw = std::max(raw, std::abs(rs(0) - std::sqrt(re(0))));
    interp << fmt(a) << ',' << fmt(zi.eps(0)) << ',' << fmt(zi.sig(0)) << ',' << fmt(re(0)) << ',' << fmt(rs(0)) << '\n';
  }
  rep.metrics["interpolation_offcurve_embedded"] = emb;
  rep.metrics["interpolation_offcurve_raw"] = raw;

  const auto unseen = unseen_curve_points(laws::sqrt_toy(), {0.05, 1.0}, 100, cfg.seed);
  const auto drift = repeated_roundtrip_drift(t.model.net, normalized_columns(t.model.norm, unseen), cfg.drift_cycles);
  rep.metrics["drift_max"] = *std::max_element(drift.begin(), drift.end());

  if (!cfg.output_dir.empty()) {
    write_text(out_file(cfg, "interpolation.csv"), interp.str());
    std::ostringstream q;
    q << "metric,nn_index_c0.01,nn_index_c1,nn_index_c100,projection_eps,projection_sig\n";
    q << "query," << rep.metrics["nn_index_c0.01"] << ',' << rep.metrics["nn_index_c1"] << ','
      << rep.metrics["nn_index_c100"] << ',' << fmt(p.eps(0)) << ',' << fmt(p.sig(0)) << '\n';
    write_text(out_file(cfg, "query.csv"), q.str());
    std::ostringstream d;
    d << "cycle,invertible\n";
    for (std::size_t i = 0; i < drift.size(); ++i) d << i + 1 << ',' << fmt(drift[i]) << '\n';
    write_text(out_file(cfg, "drift.csv"), d.str());
  }
  return rep;
}

void run_autoencoder_study(const ExperimentConfig& cfg, const MaterialDatabase& db, const Trained& t,
                           ErrorReport& rep) {
  const MaterialDatabase ndb = normalize(db);
  TrainConfig tc = cfg.training;
  tc.seed = cfg.seed;
  AutoencoderArch arch;
  arch.m = db.m;
  const AutoencoderTraining ae = train_autoencoder(ndb, arch, tc);
  rep.metrics["autoencoder_linearity"] = ae.final_loss.linearity;
  rep.metrics["autoencoder_reconstruction"] = ae.final_loss.reconstruction;
  rep.metrics["autoencoder_params"] = ae.net.num_params();
  rep.metrics["invertible_params"] = t.model.net.num_params();
  const auto unseen = unseen_curve_points(laws::bar_tanh(), {-0.03, 0.03}, 100, cfg.seed);
  const DenseMatrix pts = normalized_columns(ndb.norm, unseen);
  const auto di = repeated_roundtrip_drift(t.model.net, pts, cfg.drift_cycles);
  const auto da = repeated_roundtrip_drift(ae.net, pts, cfg.drift_cycles);
  rep.metrics["drift_max_invertible"] = *std::max_element(di.begin(), di.end());
  rep.metrics["drift_max_autoencoder"] = *std::max_element(da.begin(), da.end());
  if (!cfg.output_dir.empty()) {
    write_loss_history_csv(out_file(cfg, "autoencoder_loss_history.csv"), ae.history);
    std::ostringstream d;
    d << "cycle,invertible,autoencoder\n";
    for (std::size_t i = 0; i < di.size(); ++i) d << i + 1 << ',' << fmt(di[i]) << ',' << fmt(da[i]) << '\n';
    write_text(out_file(cfg, "drift.csv"), d.str());
  }
}

ErrorReport run_single(const ExperimentConfig& cfg) {
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const Mesh mesh = mesh_for(cfg);
  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  if (!cfg.output_dir.empty()) write_mesh_json(out_file(cfg, "mesh.json"), mesh);

  std::optional<Trained> t;
  if (cfg.wants("manifold")) {
    t = train(cfg, db);
    rep.train_loss = t->training.final_loss;
    rep.train_time = t->seconds;
  }
  write_training_artifacts(cfg, db, t ? &*t : nullptr);
  if (t && cfg.autoencoder) run_autoencoder_study(cfg, db, *t, rep);

  const bool needs_reference = cfg.wants("reference") || !is_one_of(cfg.name, {"bar_complete", "bar_incomplete", "heat2d"});
  std::optional<Solution> reference;
  if (needs_reference) reference = solve_reference(mesh, law_for(cfg.name));
  if (cfg.wants("reference")) {
    rep.solvers["reference"] = make_report(field_errors(cfg.name, mesh, *reference, &*reference), *reference);
    write_solution(cfg, mesh, "reference", *reference);
  }
  const Solution* ref = reference ? &*reference : nullptr;

  if (t) {
    const ManifoldProjector proj(t->model);
    const Solution s = solve_dd(mesh, db, LocalProjector::embedded(proj), cfg.solver, cfg.seed);
    rep.solvers["manifold"] = make_report(field_errors(cfg.name, mesh, s, ref), s);
    write_solution(cfg, mesh, "manifold", s);
    if (cfg.name == "bar_complete" || cfg.name == "bar_incomplete") {
      const MaterialLaw law = laws::bar_tanh();
      double dev = 0.0;
      for (const auto& q : s.states) dev = std::max(dev, std::abs(q.mat.sig(0) - law.stress(q.mat.eps)(0)));
      rep.metrics["manifold_max_state_deviation"] = dev;
    }
  }
  if (cfg.wants("nn")) {
    const NnIndex idx(db);
    const Solution s = solve_dd(mesh, db, LocalProjector::nearest(idx), cfg.solver, cfg.seed);
    rep.solvers["nn"] = make_report(field_errors(cfg.name, mesh, s, ref), s);
    write_solution(cfg, mesh, "nn", s);
  }
  return rep;
}

ErrorReport run_truss(const ExperimentConfig& cfg) {
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const Mesh mesh = mesh_for(cfg);
  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  if (!cfg.output_dir.empty()) write_mesh_json(out_file(cfg, "mesh.json"), mesh);
  const int apex = meshes::truss_apex_dof(mesh);
  const int n_steps = 3 * problems::kTrussLoadSteps;
  const int peak = problems::kTrussLoadSteps;

  SolverConfig sc = cfg.solver;
  sc.seed = cfg.seed;
  sc.load_steps.clear();
  for (int k = 0; k <= n_steps; ++k) sc.load_steps.push_back({problems::truss_load(k), 1.0});

  std::optional<Trained> t;
  if (cfg.wants("manifold")) {
    t = train(cfg, db);
    rep.train_loss = t->training.final_loss;
    rep.train_time = t->seconds;
  }
  write_training_artifacts(cfg, db, t ? &*t : nullptr);

  std::map<std::string, std::vector<double>> disp;
  std::map<std::string, std::vector<std::vector<QuadState>>> states;
  std::vector<double> force;
  for (int k = 0; k <= n_steps; ++k) force.push_back(problems::truss_load(k));

  auto record_path = [&](const std::string& label, const LocalProjector& local) {
    sc.strategy = local.strategy();
    const auto t0 = Clock::now();
    SolverReport r;
    PathResult path;
    try {
      path = dd_solve_path(mesh, db, local, sc, apex);
    } catch (const NotConvergedError& e) {
      r.converged = false;
      rep.metrics["failed_" + label] = 1.0;
      return;
    }
    r.wall_time = seconds_since(t0);
    for (const auto& s : path.steps) {
      r.outer_iters += s.outer_iters;
      states[label].push_back(s.states);
    }
    disp[label] = path.displacement;
    rep.solvers[label] = r;
  };
  if (t) {
    const ManifoldProjector proj(t->model);
    record_path("manifold", LocalProjector::embedded(proj));
  }
  if (cfg.wants("nn")) {
    const NnIndex idx(db);
    record_path("nn", LocalProjector::nearest(idx));
  }
  {
    const auto t0 = Clock::now();
    SolverReport r;
    for (int k = 0; k <= n_steps; ++k) {
      const ReferenceResult ref = reference_solve(mesh, law_for(cfg.name), {}, force[k]);
      disp["reference"].push_back(ref.field.u(apex));
      states["reference"].push_back(ref.states);
      r.outer_iters += ref.newton_iterations;
    }
    r.wall_time = seconds_since(t0);
    if (cfg.wants("reference")) rep.solvers["reference"] = r;
  }

  const std::vector<double>& uref = disp["reference"];
  for (auto& [label, u] : disp) {
    const std::vector<double> lu(u.begin(), u.begin() + 2 * peak + 1), lf(force.begin(), force.begin() + 2 * peak + 1);
    const std::vector<double> wu(u.begin(), u.begin() + peak + 1), wf(force.begin(), force.begin() + peak + 1);
    const double area = loop_area(lu, lf);
    const double work = std::abs(path_work(wu, wf));
    rep.metrics["loop_area_" + label] = area;
    rep.metrics["peak_work_" + label] = work;
    rep.metrics["loop_ratio_" + label] = work > 0.0 ? area / work : 0.0;
    if (rep.solvers.count(label)) {
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        num += (u[k] - uref[k]) * (u[k] - uref[k]);
        den += uref[k] * uref[k];
      }
      rep.solvers[label].l2_rel["u_apex"] = std::sqrt(num / den);
    }
  }

  if (!cfg.output_dir.empty()) {
    std::ostringstream fd;
    fd << "step,force";
    for (const auto& [label, u] : disp) fd << ",u_" << label;
    fd << '\n';
    for (int k = 0; k <= n_steps; ++k) {
      fd << k << ',' << fmt(force[k]);
      for (const auto& [label, u] : disp) fd << ',' << fmt(u[k]);
      fd << '\n';
    }
    write_text(out_file(cfg, "force_displacement.csv"), fd.str());
    for (const auto& [label, per_step] : states) {
      std::ostringstream st;
      st << "step,member,eps,sig\n";
      for (std::size_t k = 0; k < per_step.size(); ++k) {
        for (std::size_t m = 0; m < per_step[k].size(); ++m) {
          const PhasePoint& z = label == "reference" ? per_step[k][m].mech : per_step[k][m].mat;
          st << k << ',' << m << ',' << fmt(z.eps(0)) << ',' << fmt(z.sig(0)) << '\n';
        }
      }
      write_text(out_file(cfg, label + "_states.csv"), st.str());
    }
  }
  return rep;
}

/// Repeated solves over seeds; returns per-seed primary errors.
SeedStats seed_runs(const std::string& label, const ExperimentConfig& cfg, const Mesh& mesh,
                    const MaterialDatabase& db, const LocalProjector& local, const Solution* reference,
                    int n_seeds) {
  SeedStats st;
  st.label = label;
  std::vector<std::optional<Solution>> sols(static_cast<std::size_t>(n_seeds));
  std::vector<std::string> errs(static_cast<std::size_t>(n_seeds));
  parallel_for(sols.size(), [&](std::size_t i) {
    try {
      sols[i] = solve_dd(mesh, db, local, cfg.solver, cfg.seed + i);
    } catch (const std::exception& e) {
      errs[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < sols.size(); ++i) {
    const std::uint64_t seed = cfg.seed + i;
    if (!sols[i]) {
      st.failures.push_back("seed " + std::to_string(seed) + ": " + errs[i]);
      continue;
    }
    if (!sols[i]->converged) st.failures.push_back("seed " + std::to_string(seed) + ": not converged");
    st.seeds.push_back(seed);
    st.values.push_back(field_errors(cfg.name, mesh, *sols[i], reference).at(primary_field(cfg.name)));
    st.wall_times.push_back(sols[i]->seconds);
  }
  st.finalize();
  return st;
}

ErrorReport run_scaling(const ExperimentConfig& cfg) {
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const Mesh mesh = mesh_for(cfg);
  if (!cfg.output_dir.empty()) write_mesh_json(out_file(cfg, "mesh.json"), mesh);
  const Solution reference = solve_reference(mesh, law_for(cfg.name));
  rep.solvers["reference"] = make_report(field_errors(cfg.name, mesh, reference, &reference), reference);

  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  std::ostringstream csv;
  csv << "strategy,n_data,seed,u_error,wall_time\n";
  auto add = [&](const SeedStats& st, std::size_t n) {
    for (std::size_t i = 0; i < st.values.size(); ++i) {
      csv << st.label.substr(0, st.label.find('@')) << ',' << n << ',' << st.seeds[i] << ',' << fmt(st.values[i])
          << ',' << fmt(st.wall_times[i]) << '\n';
    }
    rep.seed_stats.push_back(st);
  };

  double manifold_mean = std::numeric_limits<double>::quiet_NaN();
  if (cfg.wants("manifold")) {
    const Trained t = train(cfg, db);
    rep.train_loss = t.training.final_loss;
    rep.train_time = t.seconds;
    write_training_artifacts(cfg, db, &t);
    const ManifoldProjector proj(t.model);
    const SeedStats st = seed_runs("manifold@" + std::to_string(db.size()), cfg, mesh, db,
                                   LocalProjector::embedded(proj), &reference, cfg.n_seeds);
    manifold_mean = st.mean;
    rep.metrics["manifold_u_error_mean"] = st.mean;
    rep.metrics["manifold_u_error_std"] = st.std;
    add(st, db.size());
  }
  if (cfg.wants("nn")) {
    double match = -1.0;
    for (int g : cfg.nn_grids) {
      const MaterialDatabase dbn = database_for(cfg, g);
      const NnIndex idx(dbn);
      const SeedStats st = seed_runs("nn@" + std::to_string(dbn.size()), cfg, mesh, dbn,
                                     LocalProjector::nearest(idx), &reference, cfg.n_seeds);
      const std::string n = std::to_string(dbn.size());
      rep.metrics["nn_u_error_mean@" + n] = st.mean;
      rep.metrics["nn_u_error_std@" + n] = st.std;
      rep.metrics["nn_wall_mean@" + n] = st.wall_mean;
      if (match < 0.0 && st.mean <= manifold_mean) match = static_cast<double>(dbn.size());
      add(st, dbn.size());
    }
    // Smallest NN database matching the manifold error; -1 if none does.
    rep.metrics["nn_points_to_match_manifold"] = match;
  }
  if (!cfg.output_dir.empty()) write_text(out_file(cfg, "scaling.csv"), csv.str());
  return rep;
}

// ---------------------------------------------------------------------------
// Configuration

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["strategies"] = c.strategies;
  if (!c.mesh_path.empty()) j["mesh"] = c.mesh_path;
  j["training"] = {{"initial_lr", c.training.initial_lr},
                   {"plateau_patience", c.training.plateau_patience},
                   {"lr_factor", c.training.lr_factor},
                   {"lr_min", c.training.lr_min},
                   {"warmup_iters", c.training.warmup_iters},
                   {"plateau_threshold", c.training.plateau_threshold},
                   {"max_epochs", c.training.max_epochs},
                   {"batch_size", c.training.batch_size}};
  j["architecture"] = {{"hidden", c.arch.hidden}, {"num_layers", c.arch.num_layers}, {"additive", c.arch.additive}};
  j["solver"] = {{"max_outer_iters", c.solver.max_outer_iters}, {"tol_rel", c.solver.tol_rel}};
  j["options"] = {{"autoencoder", c.autoencoder},
                  {"removed", {c.removed.lo, c.removed.hi}},
                  {"grid_n", c.grid_n},
                  {"nn_grids", c.nn_grids},
                  {"n_seeds", c.n_seeds},
                  {"drift_cycles", c.drift_cycles}};
  return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!is_one_of(it.key(), allowed)) {
      throw Error(ErrorKind::InvalidArgument, "unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

json stats_json(const SeedStats& s) {
  return {{"label", s.label},  {"seeds", s.seeds},       {"values", s.values},       {"wall_times", s.wall_times},
          {"mean", s.mean},    {"std", s.std},           {"wall_mean", s.wall_mean}, {"wall_std", s.wall_std},
          {"failures", s.failures}};
}

// Column groups of a field file: name -> column indices.
struct FieldTable {
  std::vector<std::string> header;
  std::map<long, std::vector<double>> rows;
};

FieldTable read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  FieldTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty field file " + path);
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  if (t.header.empty() || t.header[0] != "id") throw Error(ErrorKind::Io, "field file without id column: " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    const long id = std::stol(cell);
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() + 1 != t.header.size()) throw Error(ErrorKind::Io, "ragged row in " + path);
    if (!t.rows.emplace(id, std::move(vals)).second) throw Error(ErrorKind::Io, "duplicate id in " + path);
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"bar_complete", "bar_incomplete", "toy_sqrt",     "truss_cyclic",
                                                 "heat2d",       "planestrain_hole", "scaling_study"};
  return names;
}

bool ExperimentConfig::wants(const std::string& strategy) const {
  return std::find(strategies.begin(), strategies.end(), strategy) != strategies.end();
}

ExperimentConfig experiment_defaults(const std::string& name) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error(ErrorKind::InvalidArgument, "unknown experiment: " + name);
  }
  ExperimentConfig c;
  c.name = name;
  if (name == "toy_sqrt") {
    c.training.initial_lr = 5e-3;
    c.training.warmup_iters = 2000;
    c.training.max_epochs = 30000;
    c.strategies = {"manifold", "nn"};
  } else if (name == "bar_complete" || name == "bar_incomplete" || name == "truss_cyclic") {
    c.training.initial_lr = 0.05;
    c.training.warmup_iters = 2000;
    c.training.max_epochs = 20000;
    c.autoencoder = name == "bar_complete";
    if (name == "truss_cyclic") c.solver.max_outer_iters = 2000;
  } else if (name == "heat2d") {
    c.training.initial_lr = 2e-3;
    c.training.warmup_iters = 500;
    c.training.batch_size = 200;
    c.training.max_epochs = 10000;
    c.arch.hidden = {10, 10, 10, 10};
  } else {
    c.training.initial_lr = 2e-3;
    c.training.warmup_iters = 1000;
    c.training.max_epochs = 20000;
    c.arch.hidden = {10, 10, 10};
    c.solver.max_outer_iters = 1000;
    c.solver.tol_rel = 1e-12;
  }
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  try {
    check_keys(j, {"name", "seed", "output_dir", "strategies", "mesh", "training", "architecture", "solver", "options"},
               "config");
    ExperimentConfig c = experiment_defaults(j.at("name").get<std::string>());
    take(j, "seed", c.seed);
    take(j, "output_dir", c.output_dir);
    take(j, "strategies", c.strategies);
    take(j, "mesh", c.mesh_path);
    for (const auto& s : c.strategies) {
      if (!is_one_of(s, {"manifold", "nn", "reference"})) throw Error(ErrorKind::InvalidArgument, "unknown strategy " + s);
    }
    if (j.contains("training")) {
      const json& t = j["training"];
      check_keys(t, {"initial_lr", "plateau_patience", "lr_factor", "lr_min", "warmup_iters", "plateau_threshold",
                     "max_epochs", "batch_size"},
                 "training");
      take(t, "initial_lr", c.training.initial_lr);
      take(t, "plateau_patience", c.training.plateau_patience);
      take(t, "lr_factor", c.training.lr_factor);
      take(t, "lr_min", c.training.lr_min);
      take(t, "warmup_iters", c.training.warmup_iters);
      take(t, "plateau_threshold", c.training.plateau_threshold);
      take(t, "max_epochs", c.training.max_epochs);
      take(t, "batch_size", c.training.batch_size);
    }
    if (j.contains("architecture")) {
      const json& a = j["architecture"];
      check_keys(a, {"hidden", "num_layers", "additive"}, "architecture");
      take(a, "hidden", c.arch.hidden);
      take(a, "num_layers", c.arch.num_layers);
      take(a, "additive", c.arch.additive);
    }
    if (j.contains("solver")) {
      const json& s = j["solver"];
      check_keys(s, {"max_outer_iters", "tol_rel"}, "solver");
      take(s, "max_outer_iters", c.solver.max_outer_iters);
      take(s, "tol_rel", c.solver.tol_rel);
    }
    if (j.contains("options")) {
      const json& o = j["options"];
      check_keys(o, {"autoencoder", "removed", "grid_n", "nn_grids", "n_seeds", "drift_cycles"}, "options");
      take(o, "autoencoder", c.autoencoder);
      if (o.contains("removed")) {
        const auto r = o["removed"].get<std::vector<double>>();
        if (r.size() != 2) throw Error(ErrorKind::InvalidArgument, "options.removed needs two values");
        c.removed = {r[0], r[1]};
      }
      take(o, "grid_n", c.grid_n);
      take(o, "nn_grids", c.nn_grids);
      take(o, "n_seeds", c.n_seeds);
      take(o, "drift_cycles", c.drift_cycles);
    }
    c.training.validate();
    c.solver.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

void SeedStats::finalize() {
  auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  moments(values, mean, std);
  moments(wall_times, wall_mean, wall_std);
}

bool ErrorReport::all_converged() const {
  for (const auto& [k, s] : solvers) {
    if (!s.converged) return false;
  }
  for (const auto& s : seed_stats) {
    if (!s.failures.empty()) return false;
  }
  for (const auto& [k, v] : metrics) {
    if (k.rfind("failed_", 0) == 0) return false;
  }
  return true;
}

const SeedStats* ErrorReport::stats(const std::string& label) const {
  for (const auto& s : seed_stats) {
    if (s.label == label) return &s;
  }
  return nullptr;
}

std::string report_json(const ErrorReport& r) {
  json j;
  j["experiment"] = r.experiment;
  j["seed"] = r.seed;
  j["n_data"] = r.n_data;
  if (r.train_loss >= 0.0) j["training"] = {{"final_loss", r.train_loss}, {"wall_time", r.train_time}};
  json solvers = json::object();
  for (const auto& [k, s] : r.solvers) {
    solvers[k] = {{"l2_rel", s.l2_rel}, {"wall_time", s.wall_time}, {"outer_iters", s.outer_iters}, {"converged", s.converged}};
  }
  j["solvers"] = solvers;
  j["metrics"] = r.metrics;
  json stats = json::array();
  for (const auto& s : r.seed_stats) stats.push_back(stats_json(s));
  j["seed_stats"] = stats;
  return j.dump(2) + "\n";
}

ErrorReport run_experiment(const ExperimentConfig& cfg) {
  cfg.training.validate();
  cfg.solver.validate();
  prepare_output(cfg);
  ErrorReport rep;
  try {
    if (cfg.name == "toy_sqrt") rep = run_toy(cfg);
    else if (cfg.name == "truss_cyclic") rep = run_truss(cfg);
    else if (cfg.name == "scaling_study") rep = run_scaling(cfg);
    else rep = run_single(cfg);
  } catch (const Error& e) {
    throw Error(e.kind(), "experiment " + cfg.name + ": " + e.what());
  }
  if (!cfg.output_dir.empty()) write_text(out_file(cfg, "report.json"), report_json(rep));
  return rep;
}

ErrorReport run_training_only(const ExperimentConfig& cfg) {
  prepare_output(cfg);
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  const Trained t = train(cfg, db);
  rep.train_loss = t.training.final_loss;
  rep.train_time = t.seconds;
  write_training_artifacts(cfg, db, &t);
  if (!cfg.output_dir.empty()) write_text(out_file(cfg, "report.json"), report_json(rep));
  return rep;
}

ErrorReport run_seed_sweep(const ExperimentConfig& cfg, int n_seeds) {
  if (n_seeds < 2) throw Error(ErrorKind::InvalidArgument, "seed sweep needs at least two seeds");
  if (!single_mesh(cfg.name)) throw Error(ErrorKind::InvalidArgument, "seed sweep is defined for single-mesh experiments");
  prepare_output(cfg);
  ErrorReport rep;
  rep.experiment = cfg.name;
  rep.seed = cfg.seed;
  const Mesh mesh = mesh_for(cfg);
  const MaterialDatabase db = database_for(cfg, cfg.grid_n);
  rep.n_data = db.size();
  std::optional<Solution> reference;
  if (is_one_of(cfg.name, {"planestrain_hole", "scaling_study"})) reference = solve_reference(mesh, law_for(cfg.name));
  const Solution* ref = reference ? &*reference : nullptr;
  if (cfg.wants("manifold")) {
    const Trained t = train(cfg, db);
    rep.train_loss = t.training.final_loss;
    rep.train_time = t.seconds;
    write_training_artifacts(cfg, db, &t);
    const ManifoldProjector proj(t.model);
    rep.seed_stats.push_back(seed_runs("manifold", cfg, mesh, db, LocalProjector::embedded(proj), ref, n_seeds));
  }
  if (cfg.wants("nn")) {
    const NnIndex idx(db);
    rep.seed_stats.push_back(seed_runs("nn", cfg, mesh, db, LocalProjector::nearest(idx), ref, n_seeds));
  }
  for (const auto& s : rep.seed_stats) {
    rep.metrics[s.label + "_error_mean"] = s.mean;
    rep.metrics[s.label + "_error_std"] = s.std;
  }
  if (!cfg.output_dir.empty()) {
    std::ostringstream csv;
    csv << "strategy,seed,error,wall_time\n";
    for (const auto& s : rep.seed_stats) {
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        csv << s.label << ',' << s.seeds[i] << ',' << fmt(s.values[i]) << ',' << fmt(s.wall_times[i]) << '\n';
      }
    }
    write_text(out_file(cfg, "sweep.csv"), csv.str());
    write_text(out_file(cfg, "report.json"), report_json(rep));
  }
  return rep;
}

ErrorReport compare_fields(const std::string& a_csv, const std::string& b_csv, const Mesh& mesh) {
  const FieldTable a = read_field_csv(a_csv);
  const FieldTable b = read_field_csv(b_csv);
  if (a.header != b.header) throw Error(ErrorKind::MeshMismatch, "field files have different columns");
  const bool nodal = std::find(a.header.begin(), a.header.end(), "u_1") != a.header.end();
  const std::size_t expected = static_cast<std::size_t>(nodal ? mesh.num_nodes() : mesh.num_elements());
  if (a.rows.size() != expected || b.rows.size() != expected) {
    throw Error(ErrorKind::MeshMismatch, "row count does not match the mesh");
  }
  const int sd = mesh.spatial_dim();
  for (const auto& [id, va] : a.rows) {
    const auto it = b.rows.find(id);
    if (id < 0 || static_cast<std::size_t>(id) >= expected || it == b.rows.end()) {
      throw Error(ErrorKind::MeshMismatch, "row id " + std::to_string(id) + " does not match the mesh");
    }
    const std::array<double, 3> x = nodal ? mesh.nodes[static_cast<std::size_t>(id)] : element_centroid(mesh, static_cast<int>(id));
    for (int c = 0; c < sd; ++c) {
      if (std::abs(va[c] - x[c]) > 1e-9 || std::abs(it->second[c] - x[c]) > 1e-9) {
        throw Error(ErrorKind::MeshMismatch, "coordinates of row " + std::to_string(id) + " differ from the mesh");
      }
    }
  }
  // Group columns by prefix before the last underscore (u_1, u_2 -> u).
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t c = 1 + static_cast<std::size_t>(sd); c < a.header.size(); ++c) {
    const std::string& h = a.header[c];
    groups[h.substr(0, h.rfind('_'))].push_back(c - 1);
  }
  ErrorReport rep;
  rep.experiment = "compare";
  rep.n_data = expected;
  SolverReport sr;
  for (const auto& [g, cols] : groups) {
    double num = 0.0, den = 0.0;
    for (const auto& [id, va] : a.rows) {
      const auto& vb = b.rows.at(id);
      for (std::size_t c : cols) {
        num += (vb[c] - va[c]) * (vb[c] - va[c]);
        den += va[c] * va[c];
      }
    }
    sr.l2_rel[g] = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  rep.solvers["compare"] = sr;
  return rep;
}

Mesh experiment_mesh(const std::string& name) {
  const ExperimentConfig cfg = experiment_defaults(name);
  if (name == "toy_sqrt") throw Error(ErrorKind::InvalidArgument, "toy_sqrt has no mesh");
  return mesh_for(cfg);
}

int thread_budget() {
  if (const char* env = std::getenv("DDMECH_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace ddmech
