#include "ddmech/phasespace.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ddmech {

Vector PhasePoint::stacked() const {
  Vector z(eps.size() + sig.size());
  z << eps, sig;
  return z;
}

PhasePoint PhasePoint::from_stacked(const Vector& z) {
  const auto m = z.size() / 2;
  return {z.head(m), z.tail(m)};
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

void fit_range(const std::vector<PhasePoint>& points, bool use_eps, Vector& lo, Vector& hi) {
  const int m = points.front().m();
  lo = Vector::Constant(m, std::numeric_limits<double>::infinity());
  hi = Vector::Constant(m, -std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    const Vector& v = use_eps ? p.eps : p.sig;
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
}

double forward_component(double x, double lo, double hi, double floor) {
  if (!(hi > lo)) return 1.0;
  return floor + (1.0 - floor) * (x - lo) / (hi - lo);
}

double inverse_component(double y, double lo, double hi, double floor) {
  if (!(hi > lo)) return lo;
  return lo + (y - floor) * (hi - lo) / (1.0 - floor);
}

}  // namespace

NormalizationTransform NormalizationTransform::fit(const std::vector<PhasePoint>& points,
                                                   double floor) {
  if (points.empty()) throw Error(ErrorKind::InvalidArgument, "cannot normalise an empty database");
  if (!(floor > 0.0 && floor < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "normalisation floor must lie in (0, 1)");
  }
  NormalizationTransform t;
  t.floor = floor;
  fit_range(points, true, t.eps_min, t.eps_max);
  fit_range(points, false, t.sig_min, t.sig_max);
  return t;
}

PhasePoint NormalizationTransform::apply(const PhasePoint& z) const {
  if (is_identity()) return z;
  PhasePoint out(Vector(z.eps.size()), Vector(z.sig.size()));
  for (Eigen::Index i = 0; i < z.eps.size(); ++i) {
    out.eps(i) = forward_component(z.eps(i), eps_min(i), eps_max(i), floor);
    out.sig(i) = forward_component(z.sig(i), sig_min(i), sig_max(i), floor);
  }
  return out;
}

PhasePoint NormalizationTransform::invert(const PhasePoint& z) const {
  if (is_identity()) return z;
  PhasePoint out(Vector(z.eps.size()), Vector(z.sig.size()));
  for (Eigen::Index i = 0; i < z.eps.size(); ++i) {
    out.eps(i) = inverse_component(z.eps(i), eps_min(i), eps_max(i), floor);
    out.sig(i) = inverse_component(z.sig(i), sig_min(i), sig_max(i), floor);
  }
  return out;
}

Vector NormalizationTransform::scale() const {
  const auto m = eps_min.size();
  Vector s(2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    s(i) = eps_max(i) > eps_min(i) ? (1.0 - floor) / (eps_max(i) - eps_min(i)) : 0.0;
    s(m + i) = sig_max(i) > sig_min(i) ? (1.0 - floor) / (sig_max(i) - sig_min(i)) : 0.0;
  }
  return s;
}

MaterialDatabase normalize(const MaterialDatabase& db, double floor) {
  MaterialDatabase out;
  out.m = db.m;
  out.metric = db.metric;
  out.norm = NormalizationTransform::fit(db.points, floor);
  out.points.reserve(db.size());
  for (const auto& p : db.points) out.points.push_back(out.norm.apply(p));
  return out;
}

// ---------------------------------------------------------------------------
// Voigt packing

Vector VoigtConvention::strain_to_voigt(const DenseMatrix& eps) const {
  Vector v(m());
  if (dim == 1) {
    v << eps(0, 0);
  } else if (dim == 2) {
    v << eps(0, 0), eps(1, 1), 2.0 * eps(0, 1);
  } else {
    v << eps(0, 0), eps(1, 1), eps(2, 2), 2.0 * eps(1, 2), 2.0 * eps(0, 2), 2.0 * eps(0, 1);
  }
  return v;
}

Vector VoigtConvention::stress_to_voigt(const DenseMatrix& sig) const {
  Vector v(m());
  if (dim == 1) {
    v << sig(0, 0);
  } else if (dim == 2) {
    v << sig(0, 0), sig(1, 1), sig(0, 1);
  } else {
    v << sig(0, 0), sig(1, 1), sig(2, 2), sig(1, 2), sig(0, 2), sig(0, 1);
  }
  return v;
}

DenseMatrix VoigtConvention::strain_from_voigt(const Vector& e) const {
  DenseMatrix t(dim, dim);
  if (dim == 1) {
    t << e(0);
  } else if (dim == 2) {
    t << e(0), 0.5 * e(2), 0.5 * e(2), e(1);
  } else {
    t << e(0), 0.5 * e(5), 0.5 * e(4), 0.5 * e(5), e(1), 0.5 * e(3), 0.5 * e(4), 0.5 * e(3), e(2);
  }
  return t;
}

DenseMatrix VoigtConvention::stress_from_voigt(const Vector& s) const {
  DenseMatrix t(dim, dim);
  if (dim == 1) {
    t << s(0);
  } else if (dim == 2) {
    t << s(0), s(2), s(2), s(1);
  } else {
    t << s(0), s(5), s(4), s(5), s(1), s(3), s(4), s(3), s(2);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Constitutive laws

namespace laws {

MaterialLaw bar_tanh(double alpha_m, double alpha_s) {
  MaterialLaw law;
  law.m = 1;
  law.stress = [=](const Vector& e) {
    return Vector::Constant(1, alpha_m * std::tanh(alpha_s * e(0)));
  };
  law.tangent = [=](const Vector& e) {
    const double c = std::cosh(alpha_s * e(0));
    return DenseMatrix::Constant(1, 1, alpha_m * alpha_s / (c * c));
  };
  return law;
}

MaterialLaw sqrt_toy() {
  MaterialLaw law;
  law.m = 1;
  law.stress = [](const Vector& e) { return Vector::Constant(1, std::sqrt(e(0))); };
  law.tangent = [](const Vector& e) {
    return DenseMatrix::Constant(1, 1, 0.5 / std::sqrt(e(0)));
  };
  return law;
}

MaterialLaw heat_tanh() {
  MaterialLaw law;
  law.m = 2;
  law.stress = [](const Vector& g) { return Vector(g.array().tanh()); };
  law.tangent = [](const Vector& g) {
    const Eigen::ArrayXd c = g.array().cosh();
    return DenseMatrix(Vector((1.0 / (c * c)).matrix()).asDiagonal());
  };
  return law;
}

MaterialLaw planestrain() {
  MaterialLaw law;
  law.m = 3;
  law.stress = planestrain_stress;
  law.tangent = planestrain_tangent;
  return law;
}

MaterialLaw linear(const DenseMatrix& c) {
  MaterialLaw law;
  law.m = static_cast<int>(c.rows());
  law.stress = [c](const Vector& e) { return Vector(c * e); };
  law.tangent = [c](const Vector&) { return c; };
  return law;
}

namespace {
double trace_plus_one(const Vector& eps) {
  const double j = 1.0 + eps(0) + eps(1);
  if (!(j > 0.0)) throw Error(ErrorKind::DomainError, "plane-strain law requires 1 + tr(eps) > 0");
  return j;
}
}  // namespace

double planestrain_energy(const Vector& eps) {
  const double j = trace_plus_one(eps);
  const double tr = eps(0) + eps(1);
  const double lj = std::log(j);
  const double shear = 0.5 * eps(2);
  const double eps_dot_eps = eps(0) * eps(0) + eps(1) * eps(1) + 2.0 * shear * shear;
  return 0.5 * (1.0 + 2.0 * tr - 2.0 * lj) + 0.5 * lj * lj + eps_dot_eps;
}

Vector planestrain_stress(const Vector& eps) {
  const double j = trace_plus_one(eps);
  const double p = 1.0 - 1.0 / j + std::log(j) / j;
  Vector sig(3);
  sig << p + 2.0 * eps(0), p + 2.0 * eps(1), eps(2);  // sigma_12 = 2 eps_12 = gamma
  return sig;
}

DenseMatrix planestrain_tangent(const Vector& eps) {
  const double j = trace_plus_one(eps);
  const double dp = (2.0 - std::log(j)) / (j * j);
  DenseMatrix d(3, 3);
  d << dp + 2.0, dp, 0.0,
       dp, dp + 2.0, 0.0,
       0.0, 0.0, 1.0;
  return d;
}

DenseMatrix planestrain_tangent_fd(const Vector& eps, double step) {
  DenseMatrix d(3, 3);
  for (int k = 0; k < 3; ++k) {
    Vector ep = eps, em = eps;
    ep(k) += step;
    em(k) -= step;
    d.col(k) = (planestrain_stress(ep) - planestrain_stress(em)) / (2.0 * step);
  }
  return 0.5 * (d + d.transpose());
}

}  // namespace laws

// ---------------------------------------------------------------------------
// Generators

namespace {

double lerp_grid(Interval r, int i, int n) {
  if (n == 1) return r.lo;
  return r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace

MaterialDatabase gen_bar_tanh(int n, Interval eps_range) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "gen_bar_tanh needs n >= 2");
  const auto law = laws::bar_tanh();
  MaterialDatabase db;
  db.m = 1;
  db.metric = EnergyMetric(SpdMatrixSmall::scaled_identity(1, laws::kBarModulus));
  for (int i = 0; i < n; ++i) {
    Vector e = Vector::Constant(1, lerp_grid(eps_range, i, n));
    db.points.emplace_back(e, law.stress(e));
  }
  return db;
}

MaterialDatabase gen_bar_incomplete(Interval removed) {
  MaterialDatabase complete = gen_bar_tanh();
  if (removed.lo > removed.hi) return complete;
  MaterialDatabase db;
  db.m = complete.m;
  db.metric = complete.metric;
  constexpr double slack = 1e-12;
  for (const auto& p : complete.points) {
    const double a = std::abs(p.eps(0));
    if (a >= removed.lo - slack && a <= removed.hi + slack) continue;
    db.points.push_back(p);
  }
  return db;
}

MaterialDatabase gen_sqrt_toy(int n) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "gen_sqrt_toy needs n >= 2");
  MaterialDatabase db;
  db.m = 1;
  db.metric = EnergyMetric(SpdMatrixSmall::identity(1));
  for (int i = 1; i <= n; ++i) {
    const double e = static_cast<double>(i) / n;
    db.points.emplace_back(Vector::Constant(1, e), Vector::Constant(1, std::sqrt(e)));
  }
  return db;
}

MaterialDatabase gen_heat_tanh(int grid_n) {
  if (grid_n < 2) throw Error(ErrorKind::InvalidArgument, "gen_heat_tanh needs grid_n >= 2");
  MaterialDatabase db;
  db.m = 2;
  db.metric = EnergyMetric(SpdMatrixSmall::scaled_identity(2, laws::kHeatModulus));
  const Interval r{-1.0, 1.0};
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < grid_n; ++j) {
      Vector g(2);
      g << lerp_grid(r, i, grid_n), lerp_grid(r, j, grid_n);
      db.points.emplace_back(g, Vector(g.array().tanh()));
    }
  }
  return db;
}

MaterialDatabase gen_planestrain(const PlaneStrainGrid& grid) {
  if (grid.n11 < 1 || grid.n22 < 1 || grid.n12 < 1) {
    throw Error(ErrorKind::InvalidArgument, "gen_planestrain needs positive grid counts");
  }
  MaterialDatabase db;
  db.m = 3;
  db.metric = EnergyMetric(SpdMatrixSmall(laws::planestrain_tangent_fd(Vector::Zero(3))));
  db.points.reserve(static_cast<std::size_t>(grid.n11) * grid.n22 * grid.n12);
  for (int i = 0; i < grid.n11; ++i) {
    for (int j = 0; j < grid.n22; ++j) {
      for (int k = 0; k < grid.n12; ++k) {
        Vector e(3);
        e << lerp_grid(grid.eps11, i, grid.n11), lerp_grid(grid.eps22, j, grid.n22),
            2.0 * lerp_grid(grid.eps12, k, grid.n12);
        db.points.emplace_back(e, laws::planestrain_stress(e));
      }
    }
  }
  return db;
}

// ---------------------------------------------------------------------------
// CSV

void write_database_csv(std::ostream& out, const MaterialDatabase& db) {
  for (int i = 0; i < db.m; ++i) out << (i ? "," : "") << "eps_" << i + 1;
  for (int i = 0; i < db.m; ++i) out << ",sig_" << i + 1;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& p : db.points) {
    for (int i = 0; i < db.m; ++i) out << (i ? "," : "") << p.eps(i);
    for (int i = 0; i < db.m; ++i) out << ',' << p.sig(i);
    out << '\n';
  }
}

void write_database_csv(const std::string& path, const MaterialDatabase& db) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  write_database_csv(out, db);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw Error(ErrorKind::Io, "bad number '" + s + "'");
  return v;
}

}  // namespace

MaterialDatabase read_database_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty database file");
  const auto header = split_csv(line);
  if (header.empty() || header.size() % 2 != 0) {
    throw Error(ErrorKind::Io, "database header must have 2m columns");
  }
  const int m = static_cast<int>(header.size() / 2);
  for (int i = 0; i < m; ++i) {
    if (header[i] != "eps_" + std::to_string(i + 1) ||
        header[m + i] != "sig_" + std::to_string(i + 1)) {
      throw Error(ErrorKind::Io, "unexpected database header: " + line);
    }
  }
  MaterialDatabase db;
  db.m = m;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw Error(ErrorKind::Io, "ragged database row: " + line);
    PhasePoint p{Vector(m), Vector(m)};
    for (int i = 0; i < m; ++i) {
      p.eps(i) = parse_double(cells[i]);
      p.sig(i) = parse_double(cells[m + i]);
    }
    db.points.push_back(std::move(p));
  }
  return db;
}

MaterialDatabase read_database_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_database_csv(in);
}

}  // namespace ddmech
