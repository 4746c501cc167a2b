#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ddmech/phasespace.hpp"

using namespace ddmech;

namespace {

PhasePoint pp(double e, double s) { return {Vector::Constant(1, e), Vector::Constant(1, s)}; }

// Independent evaluation of the plane-strain energy from tensor components.
double psi_tensor(double e11, double e22, double e12) {
  const double tr = e11 + e22;
  const double j = 1.0 + tr;
  const double l = std::log(j);
  const double ee = e11 * e11 + e22 * e22 + 2.0 * e12 * e12;
  return 0.5 * (1.0 + 2.0 * tr - 2.0 * l) + 0.5 * l * l + ee;
}

}  // namespace

TEST(GenBarTanh, MidpointIsOrigin) {
  const auto db = gen_bar_tanh(41, {-0.03, 0.03});
  ASSERT_EQ(db.size(), 41u);
  EXPECT_NEAR(db.points[20].eps(0), 0.0, 1e-15);
  EXPECT_NEAR(db.points[20].sig(0), 0.0, 1e-12);
}

TEST(GenBarTanh, StressAtTwoPercentStrain) {
  const auto law = laws::bar_tanh();
  EXPECT_NEAR(law.stress(Vector::Constant(1, 0.02))(0), 833.6546, 1e-4);
}

TEST(GenBarTanh, TwoPointsAreEndpoints) {
  const auto db = gen_bar_tanh(2, {0.0, 0.01});
  ASSERT_EQ(db.size(), 2u);
  EXPECT_EQ(db.points[0].eps(0), 0.0);
  EXPECT_EQ(db.points[1].eps(0), 0.01);
  EXPECT_THROW(gen_bar_tanh(1), Error);
}

TEST(GenBarTanh, PointsOnCurveAndMetric) {
  const auto db = gen_bar_tanh();
  for (const auto& p : db.points) EXPECT_NEAR(p.sig(0), 1000.0 * std::tanh(60.0 * p.eps(0)), 1e-12 * 1000);
  EXPECT_NEAR(db.metric.C(0, 0), 42694.67, 1e-9);
  EXPECT_NEAR(db.metric.C(0, 0) * db.metric.S(0, 0), 1.0, 1e-10);
}

TEST(GenBarIncomplete, EmptyRemovalIsComplete) {
  const auto full = gen_bar_tanh();
  const auto db = gen_bar_incomplete({1.0, 0.0});
  ASSERT_EQ(db.size(), full.size());
  for (std::size_t i = 0; i < db.size(); ++i) EXPECT_EQ(db.points[i].eps(0), full.points[i].eps(0));
}

TEST(GenBarIncomplete, DefaultRemovalIsProperSubset) {
  const auto full = gen_bar_tanh();
  const auto db = gen_bar_incomplete();
  EXPECT_LT(db.size(), full.size());
  bool has_origin = false;
  for (const auto& p : db.points) {
    if (p.eps(0) == 0.0 && p.sig(0) == 0.0) has_origin = true;
    const bool member = std::any_of(full.points.begin(), full.points.end(), [&](const PhasePoint& q) {
      return q.eps(0) == p.eps(0) && q.sig(0) == p.sig(0);
    });
    EXPECT_TRUE(member);
    EXPECT_FALSE(std::abs(p.eps(0)) > 0.012 + 1e-12 && std::abs(p.eps(0)) < 0.024 - 1e-12);
  }
  EXPECT_TRUE(has_origin);
}

TEST(GenSqrtToy, Values) {
  const auto db = gen_sqrt_toy(20);
  ASSERT_EQ(db.size(), 20u);
  EXPECT_EQ(db.points.back().eps(0), 1.0);
  EXPECT_EQ(db.points.back().sig(0), 1.0);
  EXPECT_NEAR(db.points[4].eps(0), 0.25, 1e-15);
  EXPECT_NEAR(db.points[4].sig(0), 0.5, 1e-15);
  for (std::size_t i = 1; i < db.size(); ++i) EXPECT_GT(db.points[i].eps(0), db.points[i - 1].eps(0));
  EXPECT_GT(db.points.front().eps(0), 0.0);
}

TEST(GenHeatTanh, GridAndValues) {
  const auto db = gen_heat_tanh(20);
  ASSERT_EQ(db.size(), 400u);
  EXPECT_EQ(db.m, 2);
  for (const auto& p : db.points) {
    EXPECT_NEAR(p.sig(0), std::tanh(p.eps(0)), 1e-15);
    EXPECT_NEAR(p.sig(1), std::tanh(p.eps(1)), 1e-15);
  }
  EXPECT_EQ(db.points.back().eps(0), 1.0);
  EXPECT_NEAR(db.points.back().sig(1), std::tanh(1.0), 1e-15);
  EXPECT_NEAR(db.metric.C(0, 0), 0.42, 1e-15);
  EXPECT_EQ(db.metric.C(0, 1), 0.0);
}

TEST(GenPlanestrain, ZeroStrainZeroStress) {
  const Vector s = laws::planestrain_stress(Vector::Zero(3));
  EXPECT_LE(s.norm(), 1e-15);
}

TEST(GenPlanestrain, StressIsEnergyGradient) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> e11(-0.335, 0.0155), e22(0.12, 1.0), e12(-0.03, 0.03);
  const double h = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double a = e11(rng), b = e22(rng), c = e12(rng);
    Vector eps(3);
    eps << a, b, 2.0 * c;
    const Vector s = laws::planestrain_stress(eps);
    const double d11 = (psi_tensor(a + h, b, c) - psi_tensor(a - h, b, c)) / (2 * h);
    const double d22 = (psi_tensor(a, b + h, c) - psi_tensor(a, b - h, c)) / (2 * h);
    // Engineering shear: d psi / d gamma = (1/2) d psi / d e12.
    const double d12 = 0.5 * (psi_tensor(a, b, c + h) - psi_tensor(a, b, c - h)) / (2 * h);
    worst = std::max({worst, std::abs(s(0) - d11), std::abs(s(1) - d22), std::abs(s(2) - d12)});
    EXPECT_NEAR(laws::planestrain_energy(eps), psi_tensor(a, b, c), 1e-14);
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(GenPlanestrain, GridAndMetric) {
  const auto db = gen_planestrain();
  ASSERT_EQ(db.size(), 1000u);
  EXPECT_EQ(db.m, 3);
  for (const auto& p : db.points) EXPECT_LE((p.sig - laws::planestrain_stress(p.eps)).norm(), 1e-12);
  DenseMatrix c0(3, 3);
  c0 << 4, 2, 0, 2, 4, 0, 0, 0, 1;
  EXPECT_LE((db.metric.C.matrix() - c0).norm(), 1e-6);
  EXPECT_LE((db.metric.C.matrix() * db.metric.S.matrix() - DenseMatrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(GenPlanestrain, DomainError) {
  Vector e(3);
  e << -0.6, -0.5, 0.0;
  try {
    laws::planestrain_stress(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::DomainError);
  }
}

TEST(GenPlanestrain, AnalyticTangentMatchesFiniteDifference) {
  Vector e(3);
  e << -0.1, 0.4, 0.02;
  EXPECT_LE((laws::planestrain_tangent(e) - laws::planestrain_tangent_fd(e)).norm(), 1e-7);
}

TEST(Normalize, EndpointsAndFloor) {
  MaterialDatabase db;
  db.m = 1;
  db.points = {pp(-1.0, 2.0), pp(0.0, 3.0), pp(1.0, 4.0)};
  const auto n = normalize(db);
  EXPECT_NEAR(n.points[2].eps(0), 1.0, 1e-15);
  EXPECT_NEAR(n.points[0].eps(0), NormalizationTransform::kDefaultFloor, 1e-15);
  EXPECT_GT(n.points[0].eps(0), 0.0);
  for (const auto& p : n.points) {
    EXPECT_GT(p.eps(0), 0.0);
    EXPECT_LE(p.eps(0), 1.0);
    EXPECT_GT(p.sig(0), 0.0);
    EXPECT_LE(p.sig(0), 1.0);
  }
}

TEST(Normalize, RoundTripAndMonotone) {
  const auto db = gen_planestrain();
  const auto n = normalize(db);
  for (std::size_t i = 0; i < db.size(); ++i) {
    const PhasePoint back = n.norm.invert(n.points[i]);
    EXPECT_LE((back.eps - db.points[i].eps).norm(), 1e-12);
    EXPECT_LE((back.sig - db.points[i].sig).norm(), 1e-12);
  }
  const auto bar = normalize(gen_bar_tanh());
  for (std::size_t i = 1; i < bar.size(); ++i) {
    EXPECT_GT(bar.points[i].eps(0), bar.points[i - 1].eps(0));
    EXPECT_GT(bar.points[i].sig(0), bar.points[i - 1].sig(0));
  }
}

TEST(Normalize, ConstantComponentMapsToOne) {
  MaterialDatabase db;
  db.m = 1;
  db.points = {pp(0.5, 1.0), pp(0.5, 2.0)};
  const auto n = normalize(db);
  EXPECT_EQ(n.points[0].eps(0), 1.0);
  EXPECT_EQ(n.points[1].eps(0), 1.0);
  EXPECT_EQ(n.norm.invert(n.points[0]).eps(0), 0.5);
}

TEST(Normalize, EmptyDatabaseThrows) {
  MaterialDatabase db;
  EXPECT_THROW(normalize(db), Error);
}

TEST(Voigt, DoubleContractionMatchesTensor) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int dim : {1, 2, 3}) {
    const VoigtConvention v{dim};
    for (int k = 0; k < 10; ++k) {
      DenseMatrix e(dim, dim), s(dim, dim);
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
          e(i, j) = u(rng);
          s(i, j) = u(rng);
        }
      }
      e = 0.5 * (e + e.transpose()).eval();
      s = 0.5 * (s + s.transpose()).eval();
      const Vector ev = v.strain_to_voigt(e), sv = v.stress_to_voigt(s);
      ASSERT_EQ(ev.size(), v.m());
      EXPECT_NEAR(VoigtConvention::double_contraction(ev, sv), (e.array() * s.array()).sum(), 1e-14);
      EXPECT_LE((v.strain_from_voigt(ev) - e).norm(), 1e-15);
      EXPECT_LE((v.stress_from_voigt(sv) - s).norm(), 1e-15);
    }
  }
}

TEST(DatabaseCsv, RoundTripIsExact) {
  const auto db = gen_heat_tanh(5);
  std::stringstream ss;
  write_database_csv(ss, db);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "eps_1,eps_2,sig_1,sig_2");
  const auto back = read_database_csv(ss);
  ASSERT_EQ(back.size(), db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    EXPECT_EQ(back.points[i].eps, db.points[i].eps);
    EXPECT_EQ(back.points[i].sig, db.points[i].sig);
  }
}

TEST(DatabaseCsv, RejectsRaggedRows) {
  std::stringstream ss("eps_1,sig_1\n1,2\n3\n");
  EXPECT_THROW(read_database_csv(ss), Error);
}
