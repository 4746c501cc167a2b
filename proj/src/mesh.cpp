#include "ddmech/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "ddmech/error.hpp"

namespace ddmech {

std::string to_string(MeshKind kind) {
  switch (kind) {
    case MeshKind::Bar1d: return "bar1d";
    case MeshKind::Truss3d: return "truss3d";
    case MeshKind::Tri2d: return "tri2d";
  }
  return "unknown";
}

MeshKind mesh_kind_from_string(const std::string& s) {
  if (s == "bar1d") return MeshKind::Bar1d;
  if (s == "truss3d") return MeshKind::Truss3d;
  if (s == "tri2d") return MeshKind::Tri2d;
  throw Error(ErrorKind::InvalidArgument, "unknown mesh kind: " + s);
}

int Mesh::spatial_dim() const {
  switch (kind) {
    case MeshKind::Bar1d: return 1;
    case MeshKind::Truss3d: return 3;
    case MeshKind::Tri2d: return 2;
  }
  return 0;
}

int Mesh::m() const {
  if (kind != MeshKind::Tri2d) return 1;
  return dofs_per_node == 1 ? 2 : 3;
}

std::vector<int> Mesh::element_dofs(int e) const {
  const auto& el = elements[static_cast<std::size_t>(e)];
  std::vector<int> dofs;
  dofs.reserve(el.nodes.size() * static_cast<std::size_t>(dofs_per_node));
  for (int n : el.nodes) {
    for (int c = 0; c < dofs_per_node; ++c) dofs.push_back(dof(n, c));
  }
  return dofs;
}

Vector Mesh::external_load(double load_factor) const {
  Vector f = Vector::Zero(num_dofs());
  for (const auto& nv : neumann) f(nv.dof) += nv.value;
  if (body_load.size() == f.size()) f += body_load;
  return load_factor * f;
}

void Mesh::validate() const {
  const int nn = kind == MeshKind::Tri2d ? 3 : 2;
  const int expected_dpn = kind == MeshKind::Bar1d ? 1 : kind == MeshKind::Truss3d ? 3 : -1;
  if (expected_dpn > 0 && dofs_per_node != expected_dpn) {
    throw Error(ErrorKind::InvalidArgument, "mesh: dofs_per_node does not match kind");
  }
  if (kind == MeshKind::Tri2d && dofs_per_node != 1 && dofs_per_node != 2) {
    throw Error(ErrorKind::InvalidArgument, "mesh: triangles carry 1 or 2 dofs per node");
  }
  for (const auto& el : elements) {
    if (static_cast<int>(el.nodes.size()) != nn) {
      throw Error(ErrorKind::InvalidArgument, "mesh: wrong node count in element");
    }
    for (int n : el.nodes) {
      if (n < 0 || n >= num_nodes()) throw Error(ErrorKind::InvalidArgument, "mesh: bad node index");
    }
    if (!(el.section > 0.0)) throw Error(ErrorKind::InvalidArgument, "mesh: non-positive section");
  }
  std::set<int> seen;
  for (const auto& d : dirichlet) {
    if (d.dof < 0 || d.dof >= num_dofs()) throw Error(ErrorKind::InvalidArgument, "mesh: bad Dirichlet dof");
    if (!seen.insert(d.dof).second) throw Error(ErrorKind::InvalidArgument, "mesh: duplicate Dirichlet dof");
  }
  for (const auto& d : neumann) {
    if (d.dof < 0 || d.dof >= num_dofs()) throw Error(ErrorKind::InvalidArgument, "mesh: bad load dof");
  }
  if (body_load.size() != 0 && body_load.size() != num_dofs()) {
    throw Error(ErrorKind::InvalidArgument, "mesh: body load has wrong size");
  }
}

QuadRule1d gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "gauss_legendre: n < 1");
  // Golub-Welsch on [-1, 1], then mapped to [0, 1].
  DenseMatrix j = DenseMatrix::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    j(i, i - 1) = j(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(j);
  QuadRule1d rule;
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.x.push_back(0.5 * (es.eigenvalues()(i) + 1.0));
    rule.w.push_back(v0 * v0);  // 2 v0^2 on [-1, 1], halved
  }
  return rule;
}

QuadRuleTri triangle_rule(int n) {
  const QuadRule1d g = gauss_legendre(n);
  QuadRuleTri rule;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const double u = g.x[a], v = g.x[b];
      rule.xi.push_back({u, v * (1.0 - u)});
      rule.w.push_back(g.w[a] * g.w[b] * (1.0 - u));
    }
  }
  return rule;
}

Vector integrate_bar_load(const Mesh& mesh, const ScalarField1d& q, int gauss_points) {
  if (mesh.kind != MeshKind::Bar1d) throw Error(ErrorKind::InvalidArgument, "bar load on non-bar mesh");
  const QuadRule1d g = gauss_legendre(gauss_points);
  Vector f = Vector::Zero(mesh.num_dofs());
  for (const auto& el : mesh.elements) {
    const double xa = mesh.nodes[el.nodes[0]][0], xb = mesh.nodes[el.nodes[1]][0];
    const double len = std::abs(xb - xa);
    for (std::size_t k = 0; k < g.x.size(); ++k) {
      const double t = g.x[k];
      const double val = q(xa + t * (xb - xa)) * g.w[k] * len;
      f(mesh.dof(el.nodes[0], 0)) += (1.0 - t) * val;
      f(mesh.dof(el.nodes[1], 0)) += t * val;
    }
  }
  return f;
}

Vector integrate_triangle_source(const Mesh& mesh, const ScalarField2d& s, int order) {
  if (mesh.kind != MeshKind::Tri2d || mesh.dofs_per_node != 1) {
    throw Error(ErrorKind::InvalidArgument, "triangle source on non-scalar mesh");
  }
  const QuadRuleTri rule = triangle_rule(order);
  Vector f = Vector::Zero(mesh.num_dofs());
  for (const auto& el : mesh.elements) {
    const auto& p0 = mesh.nodes[el.nodes[0]];
    const auto& p1 = mesh.nodes[el.nodes[1]];
    const auto& p2 = mesh.nodes[el.nodes[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    for (std::size_t k = 0; k < rule.w.size(); ++k) {
      const double a = rule.xi[k][0], b = rule.xi[k][1];
      const double n[3] = {1.0 - a - b, a, b};
      const double x = n[0] * p0[0] + n[1] * p1[0] + n[2] * p2[0];
      const double y = n[0] * p0[1] + n[1] * p1[1] + n[2] * p2[1];
      const double val = s(x, y) * rule.w[k] * std::abs(det) * el.section;
      for (int i = 0; i < 3; ++i) f(el.nodes[i]) += n[i] * val;
    }
  }
  return f;
}

namespace meshes {

Mesh bar(int n_elements, double length, double section) {
  if (n_elements < 1 || !(length > 0.0)) throw Error(ErrorKind::InvalidArgument, "bar: bad size");
  Mesh mesh;
  mesh.kind = MeshKind::Bar1d;
  mesh.dofs_per_node = 1;
  for (int i = 0; i <= n_elements; ++i) mesh.nodes.push_back({length * i / n_elements, 0.0, 0.0});
  for (int e = 0; e < n_elements; ++e) mesh.elements.push_back({{e, e + 1}, section});
  mesh.dirichlet.push_back({0, 0.0});
  return mesh;
}

Mesh truss_tower(double apex_load, double section) {
  Mesh mesh;
  mesh.kind = MeshKind::Truss3d;
  mesh.dofs_per_node = 3;
  const double base = 1.0, ring = 0.5, ring_z = 1.0, apex_z = 3.0;
  const int sx[4] = {1, -1, -1, 1}, sy[4] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i) mesh.nodes.push_back({base * sx[i], base * sy[i], 0.0});
  for (int i = 0; i < 4; ++i) mesh.nodes.push_back({ring * sx[i], ring * sy[i], ring_z});
  mesh.nodes.push_back({0.0, 0.0, apex_z});
  const int apex = 8;
  for (int i = 0; i < 4; ++i) {
    const int j = (i + 1) % 4;
    mesh.elements.push_back({{i, 4 + i}, section});      // vertical
    mesh.elements.push_back({{i, 4 + j}, section});      // face diagonal
    mesh.elements.push_back({{4 + i, 4 + j}, section});  // ring
    mesh.elements.push_back({{4 + i, apex}, section});   // apex member
  }
  for (int n = 0; n < 4; ++n) {
    for (int c = 0; c < 3; ++c) mesh.dirichlet.push_back({mesh.dof(n, c), 0.0});
  }
  mesh.neumann.push_back({mesh.dof(apex, 2), apex_load});
  return mesh;
}

int truss_apex_dof(const Mesh& truss) { return truss.dof(8, 2); }

Mesh rectangle(int nx, int ny, int dofs_per_node, double x0, double x1, double y0, double y1) {
  if (nx < 1 || ny < 1) throw Error(ErrorKind::InvalidArgument, "rectangle: bad grid");
  Mesh mesh;
  mesh.kind = MeshKind::Tri2d;
  mesh.dofs_per_node = dofs_per_node;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      mesh.nodes.push_back({x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny, 0.0});
    }
  }
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      // Alternate the diagonal so the mesh has no preferred direction.
      if ((i + j) % 2 == 0) {
        mesh.elements.push_back({{id(i, j), id(i + 1, j), id(i + 1, j + 1)}, 1.0});
        mesh.elements.push_back({{id(i, j), id(i + 1, j + 1), id(i, j + 1)}, 1.0});
      } else {
        mesh.elements.push_back({{id(i, j), id(i + 1, j), id(i, j + 1)}, 1.0});
        mesh.elements.push_back({{id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)}, 1.0});
      }
    }
  }
  return mesh;
}

Mesh plate_with_hole(int n_theta, int n_r, double radius) {
  if (n_theta < 8 || n_theta % 8 != 0 || n_r < 1 || !(radius > 0.0 && radius < 0.5)) {
    throw Error(ErrorKind::InvalidArgument, "plate_with_hole: bad parameters");
  }
  Mesh mesh;
  mesh.kind = MeshKind::Tri2d;
  mesh.dofs_per_node = 2;
  const double cx = 0.5, cy = 0.5;
  // Outer boundary walked counter-clockwise from the east midpoint.
  const int per_side = n_theta / 4;
  std::vector<std::array<double, 2>> outer;
  for (int k = 0; k < n_theta; ++k) {
    const double s = static_cast<double>(k) / per_side;  // perimeter position in sides
    const double p = std::fmod(s + 0.5, 4.0);            // from the south-east corner
    const int side = static_cast<int>(p);
    const double t = p - side;
    switch (side) {
      case 0: outer.push_back({1.0, t}); break;
      case 1: outer.push_back({1.0 - t, 1.0}); break;
      case 2: outer.push_back({0.0, 1.0 - t}); break;
      default: outer.push_back({t, 0.0}); break;
    }
  }
  for (int j = 0; j <= n_r; ++j) {
    const double t = static_cast<double>(j) / n_r;
    for (int k = 0; k < n_theta; ++k) {
      const double ang = std::atan2(outer[k][1] - cy, outer[k][0] - cx);
      const double ix = cx + radius * std::cos(ang), iy = cy + radius * std::sin(ang);
      double x = (1.0 - t) * ix + t * outer[k][0];
      double y = (1.0 - t) * iy + t * outer[k][1];
      if (j == n_r) {
        x = outer[k][0];
        y = outer[k][1];
      }
      mesh.nodes.push_back({x, y, 0.0});
    }
  }
  auto id = [&](int k, int j) { return j * n_theta + (k % n_theta); };
  auto add = [&](int a, int b, int c) {
    const auto& pa = mesh.nodes[a];
    const auto& pb = mesh.nodes[b];
    const auto& pc = mesh.nodes[c];
    const double det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
    if (det > 0.0) mesh.elements.push_back({{a, b, c}, 1.0});
    else mesh.elements.push_back({{a, c, b}, 1.0});
  };
  for (int j = 0; j < n_r; ++j) {
    for (int k = 0; k < n_theta; ++k) {
      // Split each cell along the diagonal that is symmetric about the axes.
      if ((k / (n_theta / 8)) % 2 == 0) {
        add(id(k, j), id(k + 1, j), id(k + 1, j + 1));
        add(id(k, j), id(k + 1, j + 1), id(k, j + 1));
      } else {
        add(id(k, j), id(k + 1, j), id(k, j + 1));
        add(id(k + 1, j), id(k + 1, j + 1), id(k, j + 1));
      }
    }
  }
  const double tol = 1e-12;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const double y = mesh.nodes[n][1];
    if (std::abs(y) < tol) {
      mesh.dirichlet.push_back({mesh.dof(n, 0), 0.0});
      mesh.dirichlet.push_back({mesh.dof(n, 1), 0.0});
    } else if (std::abs(y - 1.0) < tol) {
      mesh.dirichlet.push_back({mesh.dof(n, 1), 0.1});
    }
  }
  return mesh;
}

}  // namespace meshes

using nlohmann::json;

void write_mesh_json(std::ostream& out, const Mesh& mesh) {
  json j;
  j["format"] = "ddmech-mesh";
  j["version"] = 1;
  j["kind"] = to_string(mesh.kind);
  j["dofs_per_node"] = mesh.dofs_per_node;
  const int sd = mesh.spatial_dim();
  json nodes = json::array();
  for (const auto& p : mesh.nodes) {
    json row = json::array();
    for (int c = 0; c < sd; ++c) row.push_back(p[c]);
    nodes.push_back(row);
  }
  j["nodes"] = nodes;
  json elements = json::array(), sections = json::array();
  for (const auto& el : mesh.elements) {
    elements.push_back(el.nodes);
    sections.push_back(el.section);
  }
  j["elements"] = elements;
  j["sections"] = sections;
  json dir = json::array(), neu = json::array();
  for (const auto& d : mesh.dirichlet) dir.push_back({d.dof, d.value});
  for (const auto& d : mesh.neumann) neu.push_back({d.dof, d.value});
  j["dirichlet"] = dir;
  j["neumann"] = neu;
  j["body_load"] = std::vector<double>(mesh.body_load.data(), mesh.body_load.data() + mesh.body_load.size());
  out << j.dump(1) << '\n';
}

void write_mesh_json(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_mesh_json(out, mesh);
}

Mesh read_mesh_json(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("mesh json: ") + e.what());
  }
  try {
    Mesh mesh;
    mesh.kind = mesh_kind_from_string(j.at("kind").get<std::string>());
    mesh.dofs_per_node = j.at("dofs_per_node").get<int>();
    for (const auto& row : j.at("nodes")) {
      std::array<double, 3> p{0.0, 0.0, 0.0};
      for (std::size_t c = 0; c < row.size() && c < 3; ++c) p[c] = row[c].get<double>();
      mesh.nodes.push_back(p);
    }
    const auto& els = j.at("elements");
    std::vector<double> sections(els.size(), 1.0);
    if (j.contains("sections")) sections = j.at("sections").get<std::vector<double>>();
    if (sections.size() != els.size()) throw Error(ErrorKind::Io, "mesh json: sections size");
    for (std::size_t e = 0; e < els.size(); ++e) {
      mesh.elements.push_back({els[e].get<std::vector<int>>(), sections[e]});
    }
    for (const auto& d : j.value("dirichlet", json::array())) mesh.dirichlet.push_back({d[0].get<int>(), d[1].get<double>()});
    for (const auto& d : j.value("neumann", json::array())) mesh.neumann.push_back({d[0].get<int>(), d[1].get<double>()});
    const auto body = j.value("body_load", std::vector<double>{});
    if (!body.empty()) mesh.body_load = Eigen::Map<const Vector>(body.data(), static_cast<Eigen::Index>(body.size()));
    mesh.validate();
    return mesh;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("mesh json: ") + e.what());
  }
}

Mesh read_mesh_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  return read_mesh_json(in);
}

}  // namespace ddmech
