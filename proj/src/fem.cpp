#include "ddmech/fem.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "ddmech/error.hpp"

namespace ddmech {
namespace {

SparseMatrix assemble_stiffness(const Mesh& mesh, const std::vector<ElementOperator>& ops,
                                const std::vector<DenseMatrix>& moduli) {
  std::vector<Triplet> trip;
  for (std::size_t e = 0; e < ops.size(); ++e) {
    const auto& op = ops[e];
    const DenseMatrix ke = op.weight * op.b.transpose() * moduli[e] * op.b;
    for (std::size_t i = 0; i < op.dofs.size(); ++i) {
      for (std::size_t j = 0; j < op.dofs.size(); ++j) {
        trip.emplace_back(op.dofs[i], op.dofs[j], ke(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
  }
  SparseMatrix k(mesh.num_dofs(), mesh.num_dofs());
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

SparseMatrix reduce(const SparseMatrix& k, const DofMap& map) {
  std::vector<Triplet> trip;
  for (int col = 0; col < k.outerSize(); ++col) {
    const int fc = map.free_index(col);
    if (fc < 0) continue;
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      const int fr = map.free_index(static_cast<int>(it.row()));
      if (fr >= 0) trip.emplace_back(fr, fc, it.value());
    }
  }
  SparseMatrix r(map.num_free(), map.num_free());
  r.setFromTriplets(trip.begin(), trip.end());
  return r;
}

SparseSystem to_system(const SparseMatrix& k, const Vector& rhs) {
  SparseSystem sys;
  sys.dim = static_cast<int>(k.rows());
  for (int col = 0; col < k.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      sys.entries.emplace_back(static_cast<int>(it.row()), col, it.value());
    }
  }
  sys.rhs = rhs;
  return sys;
}

/// sum w B^T x_e with x_e taken from `values`.
Vector scatter(const Mesh& mesh, const std::vector<ElementOperator>& ops,
               const std::vector<Vector>& values) {
  Vector f = Vector::Zero(mesh.num_dofs());
  for (std::size_t e = 0; e < ops.size(); ++e) {
    const Vector fe = ops[e].weight * ops[e].b.transpose() * values[e];
    for (std::size_t i = 0; i < ops[e].dofs.size(); ++i) f(ops[e].dofs[i]) += fe(static_cast<Eigen::Index>(i));
  }
  return f;
}

Vector gather(const ElementOperator& op, const Vector& u) {
  Vector ue(static_cast<Eigen::Index>(op.dofs.size()));
  for (std::size_t i = 0; i < op.dofs.size(); ++i) ue(static_cast<Eigen::Index>(i)) = u(op.dofs[i]);
  return ue;
}

void check_states(const Mesh& mesh, const std::vector<QuadState>& states) {
  if (static_cast<int>(states.size()) != mesh.num_elements()) {
    throw Error(ErrorKind::DimensionMismatch, "one quadrature state per element expected");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ElementOperator strain_operator(const Mesh& mesh, int element) {
  const auto& el = mesh.elements.at(static_cast<std::size_t>(element));
  ElementOperator op;
  op.dofs = mesh.element_dofs(element);
  const auto& pa = mesh.nodes[el.nodes[0]];
  const auto& pb = mesh.nodes[el.nodes[1]];
  switch (mesh.kind) {
    case MeshKind::Bar1d: {
      const double len = pb[0] - pa[0];
      if (!(std::abs(len) > 0.0)) throw Error(ErrorKind::DegenerateElement, "zero-length bar element");
      op.b.resize(1, 2);
      op.b << -1.0 / len, 1.0 / len;
      op.weight = std::abs(len) * el.section;
      break;
    }
    case MeshKind::Truss3d: {
      Eigen::Vector3d d(pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]);
      const double len = d.norm();
      if (!(len > 0.0)) throw Error(ErrorKind::DegenerateElement, "zero-length truss member");
      const Eigen::Vector3d t = d / (len * len);
      op.b.resize(1, 6);
      op.b << -t.transpose(), t.transpose();
      op.weight = len * el.section;
      break;
    }
    case MeshKind::Tri2d: {
      const auto& pc = mesh.nodes[el.nodes[2]];
      const double x[3] = {pa[0], pb[0], pc[0]}, y[3] = {pa[1], pb[1], pc[1]};
      const double det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
      if (!(det > 0.0)) throw Error(ErrorKind::DegenerateElement, "triangle with non-positive area");
      double dx[3], dy[3];
      for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3, k = (i + 2) % 3;
        dx[i] = (y[j] - y[k]) / det;
        dy[i] = (x[k] - x[j]) / det;
      }
      if (mesh.dofs_per_node == 1) {
        op.b.resize(2, 3);
        op.b << dx[0], dx[1], dx[2], dy[0], dy[1], dy[2];
      } else {
        op.b = DenseMatrix::Zero(3, 6);
        for (int i = 0; i < 3; ++i) {
          op.b(0, 2 * i) = dx[i];
          op.b(1, 2 * i + 1) = dy[i];
          op.b(2, 2 * i) = dy[i];
          op.b(2, 2 * i + 1) = dx[i];
        }
      }
      op.weight = 0.5 * det * el.section;
      break;
    }
  }
  return op;
}

std::vector<ElementOperator> strain_operators(const Mesh& mesh) {
  std::vector<ElementOperator> ops;
  ops.reserve(mesh.elements.size());
  for (int e = 0; e < mesh.num_elements(); ++e) ops.push_back(strain_operator(mesh, e));
  return ops;
}

std::array<double, 3> element_centroid(const Mesh& mesh, int element) {
  const auto& el = mesh.elements.at(static_cast<std::size_t>(element));
  std::array<double, 3> c{0.0, 0.0, 0.0};
  for (int n : el.nodes) {
    for (int k = 0; k < 3; ++k) c[k] += mesh.nodes[n][k];
  }
  for (auto& v : c) v /= static_cast<double>(el.nodes.size());
  return c;
}

DofMap::DofMap(const Mesh& mesh) {
  free_index_.assign(static_cast<std::size_t>(mesh.num_dofs()), 0);
  prescribed_ = Vector::Zero(mesh.num_dofs());
  for (const auto& d : mesh.dirichlet) {
    free_index_.at(static_cast<std::size_t>(d.dof)) = -1;
    prescribed_(d.dof) = d.value;
  }
  for (auto& f : free_index_) {
    if (f == 0) f = num_free_++;
  }
}

Vector DofMap::prescribed(double factor) const { return factor * prescribed_; }

Vector DofMap::restrict_free(const Vector& full) const {
  Vector r(num_free_);
  for (int d = 0; d < num_dofs(); ++d) {
    if (free_index_[d] >= 0) r(free_index_[d]) = full(d);
  }
  return r;
}

Vector DofMap::expand(const Vector& free, const Vector& base) const {
  Vector full = base;
  for (int d = 0; d < num_dofs(); ++d) {
    if (free_index_[d] >= 0) full(d) = free(free_index_[d]);
  }
  return full;
}

SparseSystem assemble_global_u(const Mesh& mesh, const std::vector<QuadState>& states,
                               const SpdMatrixSmall& c, double dirichlet_factor) {
  check_states(mesh, states);
  const auto ops = strain_operators(mesh);
  const DofMap map(mesh);
  const SparseMatrix k = assemble_stiffness(mesh, ops, std::vector<DenseMatrix>(ops.size(), c.matrix()));
  std::vector<Vector> ce(states.size());
  for (std::size_t e = 0; e < states.size(); ++e) ce[e] = c.matrix() * states[e].mat.eps;
  const Vector rhs = scatter(mesh, ops, ce) - k * map.prescribed(dirichlet_factor);
  return to_system(reduce(k, map), map.restrict_free(rhs));
}

SparseSystem assemble_global_beta(const Mesh& mesh, const std::vector<QuadState>& states,
                                  const SpdMatrixSmall& s, const Vector& external_load) {
  check_states(mesh, states);
  const auto ops = strain_operators(mesh);
  const DofMap map(mesh);
  const SparseMatrix k =
      assemble_stiffness(mesh, ops, std::vector<DenseMatrix>(ops.size(), s.inverse().matrix()));
  std::vector<Vector> sig(states.size());
  for (std::size_t e = 0; e < states.size(); ++e) sig[e] = states[e].mat.sig;
  const Vector rhs = external_load - scatter(mesh, ops, sig);
  return to_system(reduce(k, map), map.restrict_free(rhs));
}

GlobalStep::GlobalStep(const Mesh& mesh, const SpdMatrixSmall& c)
    : mesh_(&mesh),
      c_(c),
      ops_(strain_operators(mesh)),
      dofs_(mesh),
      k_full_(assemble_stiffness(mesh, ops_, std::vector<DenseMatrix>(ops_.size(), c.matrix()))),
      factor_(reduce(k_full_, dofs_)) {
  if (c.dim() != mesh.m()) throw Error(ErrorKind::DimensionMismatch, "modulus width differs from mesh strain width");
}

std::vector<QuadState> GlobalStep::make_states() const {
  std::vector<QuadState> states(ops_.size());
  const int m = mesh_->m();
  for (std::size_t e = 0; e < ops_.size(); ++e) {
    states[e].mech = {Vector::Zero(m), Vector::Zero(m)};
    states[e].mat = states[e].mech;
    states[e].weight = ops_[e].weight;
  }
  return states;
}

Vector GlobalStep::internal_force(const std::vector<QuadState>& states, bool material) const {
  std::vector<Vector> sig(states.size());
  for (std::size_t e = 0; e < states.size(); ++e) sig[e] = material ? states[e].mat.sig : states[e].mech.sig;
  return scatter(*mesh_, ops_, sig);
}

Vector GlobalStep::solve_u(const std::vector<QuadState>& states, double dirichlet_factor) const {
  check_states(*mesh_, states);
  std::vector<Vector> ce(states.size());
  for (std::size_t e = 0; e < states.size(); ++e) ce[e] = c_.matrix() * states[e].mat.eps;
  const Vector ub = dofs_.prescribed(dirichlet_factor);
  const Vector rhs = scatter(*mesh_, ops_, ce) - k_full_ * ub;
  return dofs_.expand(factor_.solve(dofs_.restrict_free(rhs)), ub);
}

Vector GlobalStep::solve_beta(const std::vector<QuadState>& states, const Vector& external_load) const {
  check_states(*mesh_, states);
  const Vector rhs = external_load - internal_force(states, true);
  return dofs_.expand(factor_.solve(dofs_.restrict_free(rhs)), Vector::Zero(mesh_->num_dofs()));
}

Field GlobalStep::solve(std::vector<QuadState>& states, const Vector& external_load,
                        double dirichlet_factor) const {
  Field field{solve_u(states, dirichlet_factor), solve_beta(states, external_load)};
  for (std::size_t e = 0; e < states.size(); ++e) {
    states[e].mech.eps = ops_[e].b * gather(ops_[e], field.u);
    states[e].mech.sig = states[e].mat.sig + c_.matrix() * (ops_[e].b * gather(ops_[e], field.beta));
  }
  return field;
}

Vector GlobalStep::equilibrium_residual(const std::vector<QuadState>& states,
                                        const Vector& external_load) const {
  return dofs_.restrict_free(external_load - internal_force(states, false));
}

void stress_update(const Mesh& mesh, std::vector<QuadState>& states, const Field& field,
                   const SpdMatrixSmall& s) {
  check_states(mesh, states);
  const auto ops = strain_operators(mesh);
  const DenseMatrix c = s.inverse().matrix();
  for (std::size_t e = 0; e < states.size(); ++e) {
    states[e].mech.eps = ops[e].b * gather(ops[e], field.u);
    states[e].mech.sig = states[e].mat.sig + c * (ops[e].b * gather(ops[e], field.beta));
  }
}

ReferenceResult reference_solve(const Mesh& mesh, const MaterialLaw& law, const ReferenceOptions& opts,
                                double load_factor) {
  if (law.m != mesh.m()) throw Error(ErrorKind::DimensionMismatch, "law width differs from mesh strain width");
  const auto ops = strain_operators(mesh);
  const DofMap map(mesh);
  const Vector f_unit = mesh.external_load(1.0);

  // Newton at a fixed load level; returns false on divergence.
  auto newton = [&](Vector& u, double lambda, std::vector<double>& res, int& iters) {
    res.clear();
    const Vector f = lambda * f_unit;
    for (int it = 0; it <= opts.max_newton; ++it) {
      std::vector<Vector> sig(ops.size());
      std::vector<DenseMatrix> tan(ops.size());
      for (std::size_t e = 0; e < ops.size(); ++e) {
        const Vector eps = ops[e].b * gather(ops[e], u);
        sig[e] = law.stress(eps);
        tan[e] = law.tangent(eps);
      }
      const Vector r = map.restrict_free(f - scatter(mesh, ops, sig));
      const double rn = r.norm();
      if (!std::isfinite(rn)) return false;
      res.push_back(rn);
      if (rn <= opts.tol) return true;
      if (it == opts.max_newton) return false;
      const SpdFactorization kt(reduce(assemble_stiffness(mesh, ops, tan), map));
      u = map.expand(map.restrict_free(u) + kt.solve(r), u);
      ++iters;
    }
    return false;
  };

  ReferenceResult out;
  Vector u = map.prescribed(0.0);
  double done = 0.0, step = load_factor;
  int bisections = 0;
  while (done != load_factor) {
    double next = done + step;
    if ((step > 0.0 && next > load_factor) || (step < 0.0 && next < load_factor)) next = load_factor;
    Vector trial = map.expand(map.restrict_free(u), map.prescribed(next));
    bool ok = false;
    try {
      ok = newton(trial, next, out.residuals, out.newton_iterations);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DomainError && e.kind() != ErrorKind::Singular &&
          e.kind() != ErrorKind::NonSpd) {
        throw;
      }
      ok = false;
    }
    if (ok) {
      u = trial;
      done = next;
      ++out.load_steps;
    } else {
      if (++bisections > opts.max_bisections) {
        throw Error(ErrorKind::NoConvergence, "reference_solve: Newton failed after load bisection");
      }
      step *= 0.5;
    }
  }
  if (load_factor == 0.0) {
    Vector trial = map.prescribed(0.0);
    newton(trial, 0.0, out.residuals, out.newton_iterations);
    u = trial;
  }

  out.field.u = u;
  out.field.beta = Vector::Zero(mesh.num_dofs());
  out.states.resize(ops.size());
  for (std::size_t e = 0; e < ops.size(); ++e) {
    const Vector eps = ops[e].b * gather(ops[e], u);
    out.states[e].mech = {eps, law.stress(eps)};
    out.states[e].mat = out.states[e].mech;
    out.states[e].weight = ops[e].weight;
  }
  return out;
}

double relative_l2(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "relative_l2: size mismatch");
  const double nb = b.norm();
  const double diff = (a - b).norm();
  return nb > 0.0 ? diff / nb : diff;
}

L2Pair l2_error_nodal(const Mesh& mesh, const Vector& u, const ScalarField2d& exact, int order) {
  if (mesh.dofs_per_node != 1 || (mesh.kind != MeshKind::Bar1d && mesh.kind != MeshKind::Tri2d)) {
    throw Error(ErrorKind::InvalidArgument, "l2_error_nodal: scalar bar or triangle mesh expected");
  }
  double err2 = 0.0, norm2 = 0.0;
  if (mesh.kind == MeshKind::Bar1d) {
    const QuadRule1d g = gauss_legendre(order);
    for (const auto& el : mesh.elements) {
      const double xa = mesh.nodes[el.nodes[0]][0], xb = mesh.nodes[el.nodes[1]][0];
      for (std::size_t k = 0; k < g.x.size(); ++k) {
        const double t = g.x[k];
        const double uh = (1.0 - t) * u(el.nodes[0]) + t * u(el.nodes[1]);
        const double ue = exact(xa + t * (xb - xa), 0.0);
        const double w = g.w[k] * std::abs(xb - xa);
        err2 += w * (uh - ue) * (uh - ue);
        norm2 += w * ue * ue;
      }
    }
  } else {
    const QuadRuleTri rule = triangle_rule(order);
    for (const auto& el : mesh.elements) {
      const auto& p0 = mesh.nodes[el.nodes[0]];
      const auto& p1 = mesh.nodes[el.nodes[1]];
      const auto& p2 = mesh.nodes[el.nodes[2]];
      const double det = std::abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
      for (std::size_t k = 0; k < rule.w.size(); ++k) {
        const double a = rule.xi[k][0], b = rule.xi[k][1];
        const double n[3] = {1.0 - a - b, a, b};
        const double x = n[0] * p0[0] + n[1] * p1[0] + n[2] * p2[0];
        const double y = n[0] * p0[1] + n[1] * p1[1] + n[2] * p2[1];
        const double uh = n[0] * u(el.nodes[0]) + n[1] * u(el.nodes[1]) + n[2] * u(el.nodes[2]);
        const double ue = exact(x, y);
        const double w = rule.w[k] * det;
        err2 += w * (uh - ue) * (uh - ue);
        norm2 += w * ue * ue;
      }
    }
  }
  return {std::sqrt(err2), std::sqrt(norm2)};
}

L2Pair l2_error_quad(const std::vector<QuadState>& states, const std::vector<Vector>& exact, bool stress) {
  if (states.size() != exact.size()) throw Error(ErrorKind::DimensionMismatch, "l2_error_quad: size mismatch");
  double err2 = 0.0, norm2 = 0.0;
  for (std::size_t q = 0; q < states.size(); ++q) {
    const Vector& xh = stress ? states[q].mech.sig : states[q].mech.eps;
    err2 += states[q].weight * (xh - exact[q]).squaredNorm();
    norm2 += states[q].weight * exact[q].squaredNorm();
  }
  return {std::sqrt(err2), std::sqrt(norm2)};
}

void write_nodal_csv(std::ostream& out, const Mesh& mesh, const Field& field) {
  const int sd = mesh.spatial_dim(), d = mesh.dofs_per_node;
  const char* axes[3] = {"x", "y", "z"};
  out << "id";
  for (int c = 0; c < sd; ++c) out << ',' << axes[c];
  for (int c = 0; c < d; ++c) out << ",u_" << c + 1;
  for (int c = 0; c < d; ++c) out << ",beta_" << c + 1;
  out << '\n';
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    out << n;
    for (int c = 0; c < sd; ++c) out << ',' << fmt(mesh.nodes[n][c]);
    for (int c = 0; c < d; ++c) out << ',' << fmt(field.u(mesh.dof(n, c)));
    for (int c = 0; c < d; ++c) {
      out << ',' << fmt(field.beta.size() ? field.beta(mesh.dof(n, c)) : 0.0);
    }
    out << '\n';
  }
}

void write_nodal_csv(const std::string& path, const Mesh& mesh, const Field& field) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_nodal_csv(out, mesh, field);
}

void write_quad_csv(std::ostream& out, const Mesh& mesh, const std::vector<QuadState>& states, bool material) {
  check_states(mesh, states);
  const int sd = mesh.spatial_dim(), m = mesh.m();
  const char* axes[3] = {"x", "y", "z"};
  out << "id";
  for (int c = 0; c < sd; ++c) out << ',' << axes[c];
  for (int c = 0; c < m; ++c) out << ",eps_" << c + 1;
  for (int c = 0; c < m; ++c) out << ",sig_" << c + 1;
  out << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& z = material ? states[e].mat : states[e].mech;
    const auto x = element_centroid(mesh, e);
    out << e;
    for (int c = 0; c < sd; ++c) out << ',' << fmt(x[c]);
    for (int c = 0; c < m; ++c) out << ',' << fmt(z.eps(c));
    for (int c = 0; c < m; ++c) out << ',' << fmt(z.sig(c));
    out << '\n';
  }
}

void write_quad_csv(const std::string& path, const Mesh& mesh, const std::vector<QuadState>& states,
                    bool material) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_quad_csv(out, mesh, states, material);
}

}  // namespace ddmech
