// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ddmech/autoencoder.hpp"
#include "ddmech/experiments.hpp"
#include "ddmech/fem.hpp"
#include "ddmech/invertible_net.hpp"
#include "ddmech/problems.hpp"
#include "ddmech/projection.hpp"
#include "ddmech/training.hpp"

using namespace ddmech;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

ExperimentConfig quiet(const std::string& name) {
  ExperimentConfig c = experiment_defaults(name);
  c.output_dir.clear();
  return c;
}

DenseMatrix uniform_matrix(int r, int c, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = u(rng);
  }
  return m;
}

template <typename LossFn>
double fd_mismatch(std::vector<double> theta, const std::vector<double>& grad, LossFn loss) {
  const double h = 1e-6;
  double scale = 0.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    theta[i] = t0 + h;
    const double lp = loss(theta);
    theta[i] = t0 - h;
    const double lm = loss(theta);
    theta[i] = t0;
    const double fd = (lp - lm) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3 * scale}));
  }
  return worst;
}

// Trained toy embedding shared by criteria 1, 2 and 5.
struct Toy {
  MaterialDatabase db;
  InvertibleTraining training;
  double seconds = 0.0;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy r;
    r.db = normalize(gen_sqrt_toy(20));
    TrainConfig c;
    c.initial_lr = 5e-3;
    c.lr_factor = 0.91;
    c.plateau_patience = 50;
    c.warmup_iters = 2000;
    c.lr_min = 1e-6;
    c.max_epochs = 30000;
    const auto t0 = Clock::now();
    r.training = train_invertible(r.db, InvertibleArch{}, c);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return t;
}

Outcome invertibility() {
  const Toy& t = toy();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PhasePoint> pts;
  for (int i = 0; i < 100; ++i) {
    const double e = u(rng);
    pts.push_back(t.db.norm.apply(PhasePoint(Vector::Constant(1, e), Vector::Constant(1, std::sqrt(e)))));
  }
  const auto t0 = Clock::now();
  const auto drift = repeated_roundtrip_drift(t.training.net, stack_points(pts), 200);
  const double s = seconds_since(t0);
  const double worst = *std::max_element(drift.begin(), drift.end());
  return {worst <= 1e-10 && s < 1.0, fmt("max drift %.3g after 200 cycles, %.3f s", worst, s)};
}

Outcome training_floor() {
  const Toy& t = toy();
  return {t.training.final_loss <= 1e-5 && t.seconds < 120.0,
          fmt("final linearity mse %.3g, %.1f s", t.training.final_loss, t.seconds)};
}

Outcome hyperplane_optimality() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst_res = 0.0;
  int losses = 0;
  for (int m : {1, 3}) {
    const SpdMatrixSmall k = SpdMatrixSmall::identity(m);
    for (int q = 0; q < 1000; ++q) {
      PhasePoint z{Vector(m), Vector(m)};
      for (int i = 0; i < m; ++i) {
        z.eps(i) = u(rng);
        z.sig(i) = u(rng);
      }
      const PhasePoint p = hyperplane_project(z, k);
      worst_res = std::max(worst_res, (p.sig - p.eps).norm());
      const double d = (p.stacked() - z.stacked()).norm();
      for (int r = 0; r < 100; ++r) {
        Vector e(m);
        for (int i = 0; i < m; ++i) e(i) = u(rng);
        if ((PhasePoint(e, e).stacked() - z.stacked()).norm() < d) ++losses;
      }
    }
  }
  return {losses == 0 && worst_res <= 1e-12,
          fmt("%.0f random hyperplane points closer, max residual %.3g", losses, worst_res)};
}

Outcome nn_equivalence() {
  std::vector<MaterialDatabase> dbs = {gen_sqrt_toy(20), gen_bar_tanh(), gen_bar_incomplete(), gen_heat_tanh(20)};
  for (int n : {10, 22, 46}) {
    PlaneStrainGrid g;
    g.n11 = g.n22 = g.n12 = n;
    dbs.push_back(gen_planestrain(g));
  }
  std::mt19937_64 rng(404);
  int mismatches = 0;
  for (const auto& db : dbs) {
    const NnIndex idx(db, NnIndex::Mode::KdTree);
    const int m = db.m;
    Vector lo_e = db.points[0].eps, hi_e = lo_e, lo_s = db.points[0].sig, hi_s = lo_s;
    for (const auto& p : db.points) {
      lo_e = lo_e.cwiseMin(p.eps);
      hi_e = hi_e.cwiseMax(p.eps);
      lo_s = lo_s.cwiseMin(p.sig);
      hi_s = hi_s.cwiseMax(p.sig);
    }
    std::uniform_real_distribution<double> u(-0.1, 1.1);
    for (int q = 0; q < 1000; ++q) {
      PhasePoint z{Vector(m), Vector(m)};
      for (int i = 0; i < m; ++i) {
        z.eps(i) = lo_e(i) + u(rng) * (hi_e(i) - lo_e(i));
        z.sig(i) = lo_s(i) + u(rng) * (hi_s(i) - lo_s(i));
      }
      if (idx.nearest_kdtree(z).index != idx.nearest_brute_force(z).index) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("%.0f mismatches over %.0f databases x 1000 queries", mismatches,
                               static_cast<double>(dbs.size()))};
}

Outcome metric_dependence() {
  const MaterialDatabase raw = gen_sqrt_toy(20);
  const PhasePoint q{Vector::Constant(1, 0.61), Vector::Constant(1, 0.67)};
  std::vector<std::size_t> winners;
  for (double c : {0.01, 1.0, 100.0}) {
    const NnIndex idx(raw, EnergyMetric(SpdMatrixSmall::scaled_identity(1, c)), NnIndex::Mode::BruteForce);
    winners.push_back(idx.nearest(q).index);
  }
  std::vector<std::size_t> distinct = winners;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const Toy& t = toy();
  const ManifoldProjector proj(EmbeddingModel{t.training.net, t.db.norm, SpdMatrixSmall::identity(1)});
  const PhasePoint p = manifold_project(q, proj);
  const double off = std::abs(p.sig(0) - std::sqrt(std::max(p.eps(0), 0.0)));
  return {distinct.size() >= 2 && off <= 1e-2 && p.eps(0) >= 0.0,
          fmt("%.0f distinct winners, projection (%.4f, %.4f), off-curve %.3g", static_cast<double>(distinct.size()),
              p.eps(0), p.sig(0), off)};
}

Outcome bar_complete() {
  const auto t0 = Clock::now();
  const ErrorReport r = run_experiment(quiet("bar_complete"));
  const double s = seconds_since(t0) - r.train_time;
  const double u = r.solvers.at("manifold").l2_rel.at("u");
  const double dev = r.metrics.at("manifold_max_state_deviation");
  const double em = r.solvers.at("manifold").l2_rel.at("eps");
  const double en = r.solvers.at("nn").l2_rel.at("eps");
  return {r.all_converged() && u <= 0.02 && dev <= 10.0 && en > em && s < 60.0,
          fmt("manifold u %.3g, max state deviation %.3g MPa, eps manifold %.3g vs nn %.3g", u, dev, em, en)};
}

Outcome bar_incomplete() {
  const ErrorReport full = run_experiment(quiet("bar_complete"));
  const ErrorReport gap = run_experiment(quiet("bar_incomplete"));
  const double dm = gap.solvers.at("manifold").l2_rel.at("u") / full.solvers.at("manifold").l2_rel.at("u");
  const double dn = gap.solvers.at("nn").l2_rel.at("u") / full.solvers.at("nn").l2_rel.at("u");
  return {gap.all_converged() && dm <= 2.0 && dn > 2.0,
          fmt("u error degradation manifold %.3gx (limit 2x), nn %.3gx", dm, dn)};
}

Outcome truss() {
  const ErrorReport r = run_experiment(quiet("truss_cyclic"));
  const double ratio = r.metrics.at("loop_ratio_manifold");
  const double am = r.metrics.at("loop_area_manifold");
  const double an = r.metrics.at("loop_area_nn");
  return {r.all_converged() && ratio <= 0.01 && an > 5.0 * am,
          fmt("manifold loop/peak work %.3g, loop area nn %.4g vs manifold %.3g", ratio, an, am)};
}

Outcome heat() {
  const ErrorReport r = run_experiment(quiet("heat2d"));
  const double tm = r.solvers.at("manifold").l2_rel.at("T");
  const double tr = r.solvers.at("reference").l2_rel.at("T");
  const double qm = r.solvers.at("manifold").l2_rel.at("q");
  const double qn = r.solvers.at("nn").l2_rel.at("q");
  return {r.all_converged() && tm <= 1.5 * tr && qm < qn,
          fmt("T manifold %.3g vs 1.5 x reference %.3g, q manifold %.3g vs nn %.3g", tm, 1.5 * tr, qm, qn)};
}

Outcome scaling() {
  const auto t0 = Clock::now();
  const ErrorReport r = run_experiment(quiet("scaling_study"));
  const double s = seconds_since(t0);
  const double mm = r.metrics.at("manifold_u_error_mean");
  const double ms = r.metrics.at("manifold_u_error_std");
  const double nbig = r.metrics.at("nn_u_error_mean@97336");
  const double nstd = r.metrics.at("nn_u_error_std@1000");
  std::string walls;
  for (const auto& st : r.seed_stats) walls += " " + st.label + fmt(" %.3g s", st.wall_mean);
  return {r.all_converged() && mm <= nbig && ms <= 1e-10 && nstd > 0.0 && s < 1800.0,
          fmt("manifold %.4g (std %.3g) vs nn@97336 %.4g, nn@1000 std %.3g,", mm, ms, nbig, nstd) + walls +
              fmt(", total %.0f s", s)};
}

Outcome gradients() {
  InvertibleArch arch;
  arch.m = 1;
  const InvertibleNet net = InvertibleNet::build(arch, 11);
  const DenseMatrix z = uniform_matrix(2, 16, 12, 0.0, 1.0);
  const DenseMatrix k = DenseMatrix::Identity(1, 1);
  std::vector<double> g;
  net.linearity_loss(z, k, &g);
  const double a = fd_mismatch(net.params(), g, [&](const std::vector<double>& th) {
    InvertibleNet n = net;
    n.set_params(th);
    return n.linearity_loss(z, k);
  });
  InvertibleArch arch3;
  arch3.m = 3;
  arch3.num_layers = 2;
  arch3.hidden = {10, 10, 10};
  const InvertibleNet net3 = InvertibleNet::build(arch3, 13);
  const DenseMatrix z3 = uniform_matrix(6, 10, 14, 0.0, 1.0);
  DenseMatrix k3 = DenseMatrix::Identity(3, 3);
  k3(0, 1) = k3(1, 0) = 0.5;
  std::vector<double> g3;
  net3.linearity_loss(z3, k3, &g3);
  const double b = fd_mismatch(net3.params(), g3, [&](const std::vector<double>& th) {
    InvertibleNet n = net3;
    n.set_params(th);
    return n.linearity_loss(z3, k3);
  });
  AutoencoderArch aarch;
  aarch.m = 1;
  const AutoencoderPair ae = AutoencoderPair::build(aarch, 15);
  std::vector<double> ga;
  ae.loss(z, k, &ga);
  const double c = fd_mismatch(ae.params(), ga, [&](const std::vector<double>& th) {
    AutoencoderPair p = ae;
    p.set_params(th);
    return p.loss(z, k).total();
  });
  const double worst = std::max({a, b, c});
  return {worst <= 1e-4, fmt("max relative mismatch invertible %.3g / %.3g, autoencoder %.3g", a, b, c)};
}

Outcome fem_verification() {
  // Constant-strain patch on a scalar triangle mesh.
  Mesh m = problems::heat_mesh(6, 5);
  for (auto& d : m.dirichlet) d.value = 0.3 * m.nodes[d.dof][0] - 0.7 * m.nodes[d.dof][1] + 1.0;
  const GlobalStep g(m, SpdMatrixSmall::scaled_identity(2, 0.42));
  std::vector<QuadState> s(static_cast<std::size_t>(m.num_elements()));
  const auto ops = strain_operators(m);
  Vector grad(2);
  grad << 0.3, -0.7;
  for (std::size_t e = 0; e < s.size(); ++e) {
    s[e].mat = s[e].mech = PhasePoint(grad, Vector::Zero(2));
    s[e].weight = ops[e].weight;
  }
  const Vector u = g.solve_u(s);
  double patch = 0.0;
  for (int n = 0; n < m.num_nodes(); ++n) {
    patch = std::max(patch, std::abs(u(n) - (0.3 * m.nodes[n][0] - 0.7 * m.nodes[n][1] + 1.0)));
  }

  const Mesh bm = problems::bar_mesh();
  const auto bar = reference_solve(bm, laws::bar_tanh());
  double bar_err = 0.0;
  for (int n = 0; n < bm.num_nodes(); ++n) {
    bar_err = std::max(bar_err, std::abs(bar.field.u(n) - problems::bar_exact_u(bm.nodes[n][0])));
  }

  std::vector<double> errs;
  for (int n : {8, 16, 32, 64}) {
    const Mesh hm = problems::heat_mesh(n, n);
    errs.push_back(l2_error_nodal(hm, reference_solve(hm, laws::heat_tanh()).field.u, problems::heat_exact_t).relative());
  }
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 1; i < errs.size(); ++i) {
    lo = std::min(lo, errs[i - 1] / errs[i]);
    hi = std::max(hi, errs[i - 1] / errs[i]);
  }
  return {patch <= 1e-12 && bar_err <= 1e-6 && lo >= 3.5 && hi <= 4.5,
          fmt("patch %.3g, bar %.3g, heat refinement ratios [%.3f, %.3f]", patch, bar_err, lo, hi)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"invertibility", invertibility},
      {"training floor", training_floor},
      {"hyperplane projection optimality", hyperplane_optimality},
      {"nearest-neighbour oracle equivalence", nn_equivalence},
      {"metric dependence", metric_dependence},
      {"bar, complete database", bar_complete},
      {"bar, incomplete database", bar_incomplete},
      {"truss cyclic loading", truss},
      {"heat conduction", heat},
      {"plane strain scaling", scaling},
      {"gradient correctness", gradients},
      {"fem verification", fem_verification},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
