#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ddmech/autoencoder.hpp"
#include "ddmech/invertible_net.hpp"
#include "ddmech/mlp.hpp"
#include "ddmech/optim.hpp"
#include "ddmech/training.hpp"

using namespace ddmech;

namespace {

// Plain-loop forward pass, independent of the Eigen implementation.
std::vector<double> naive_forward(const Mlp& net, std::vector<double> x) {
  for (int l = 0; l < net.num_affine(); ++l) {
    const DenseMatrix& w = net.weight(l);
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (int i = 0; i < w.rows(); ++i) {
      double s = net.bias(l)(i);
      for (int j = 0; j < w.cols(); ++j) s += w(i, j) * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = l + 1 < net.num_affine() ? (s > 0 ? s : std::exp(s) - 1.0) : s;
    }
    x = y;
  }
  return x;
}

Mlp random_mlp(std::vector<int> sizes, std::uint64_t seed) {
  Mlp net(std::move(sizes));
  std::mt19937_64 rng(seed);
  net.kaiming_uniform(rng);
  return net;
}

DenseMatrix random_matrix(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

// Largest relative mismatch between an analytic gradient and central
// differences of `loss` over all parameters.
template <typename LossFn>
double fd_gradient_mismatch(std::vector<double> theta, const std::vector<double>& grad, LossFn loss,
                            double h = 1e-6) {
  double worst = 0.0;
  double scale = 0.0;
  for (double g : grad) scale = std::max(scale, std::abs(g));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    theta[i] = t0 + h;
    const double lp = loss(theta);
    theta[i] = t0 - h;
    const double lm = loss(theta);
    theta[i] = t0;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-3 * scale + 1e-12));
  }
  return worst;
}

MaterialDatabase linear_db(int n) {
  MaterialDatabase db;
  db.m = 1;
  for (int i = 0; i < n; ++i) {
    const double e = static_cast<double>(i + 1) / n;
    db.points.emplace_back(Vector::Constant(1, e), Vector::Constant(1, e));
  }
  db.metric = EnergyMetric(SpdMatrixSmall::identity(1));
  return db;
}

TrainConfig toy_config(std::uint64_t seed) {
  TrainConfig c;
  c.initial_lr = 5e-3;
  c.warmup_iters = 2000;
  c.max_epochs = 30000;
  c.seed = seed;
  return c;
}

InvertibleNet perturbed_general_net(std::uint64_t seed) {
  InvertibleArch arch;
  arch.m = 2;
  arch.num_layers = 2;
  arch.hidden = {4, 3};
  arch.additive = false;
  InvertibleNet net = InvertibleNet::build(arch, seed);
  std::vector<double> p = net.params();
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (double& v : p) v += u(rng);
  net.set_params(p);
  return net;
}

}  // namespace

TEST(Mlp, ZeroNetworkGivesZero) {
  const Mlp net({3, 5, 2});
  EXPECT_EQ(net.forward(Vector(Vector::Ones(3))).norm(), 0.0);
}

TEST(Mlp, IdentityLinearLayer) {
  Mlp net({3, 3});
  net.weight(0) = DenseMatrix::Identity(3, 3);
  const Vector x = Vector::LinSpaced(3, -1, 2);
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesNaiveForward) {
  const Mlp net = random_mlp({2, 5, 5, 5, 2}, 4);
  const DenseMatrix x = random_matrix(2, 7, 5);
  const DenseMatrix y = net.forward(x);
  for (int c = 0; c < x.cols(); ++c) {
    const auto ref = naive_forward(net, {x(0, c), x(1, c)});
    EXPECT_NEAR(y(0, c), ref[0], 1e-14);
    EXPECT_NEAR(y(1, c), ref[1], 1e-14);
  }
}

TEST(Mlp, KaimingBounds) {
  const Mlp net = random_mlp({4, 10, 10, 3}, 8);
  for (int l = 0; l < net.num_affine(); ++l) {
    const double fan_in = net.weight(l).cols();
    EXPECT_LE(net.weight(l).cwiseAbs().maxCoeff(), std::sqrt(6.0 / fan_in));
    EXPECT_LE(net.bias(l).cwiseAbs().maxCoeff(), 1.0 / std::sqrt(fan_in));
    EXPECT_GT(net.weight(l).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(net.num_params(), 4 * 10 + 10 + 10 * 10 + 10 + 10 * 3 + 3);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Mlp net = random_mlp({2, 5, 5, 5, 2}, 12);
  const DenseMatrix x = random_matrix(2, 6, 13);
  const DenseMatrix target = random_matrix(2, 6, 14);
  auto loss_at = [&](const std::vector<double>& th) {
    Mlp n = net;
    n.set_params(th);
    return 0.5 * (n.forward(x) - target).squaredNorm();
  };
  std::vector<double> theta(static_cast<std::size_t>(net.num_params()));
  net.get_params(theta);
  Mlp::Tape tape;
  const DenseMatrix y = net.forward(x, tape);
  std::vector<double> grad(theta.size(), 0.0);
  const DenseMatrix dx = net.backward(tape, y - target, grad);
  EXPECT_LE(fd_gradient_mismatch(theta, grad, loss_at), 1e-5);

  // Input gradient.
  const double h = 1e-6;
  for (int r = 0; r < x.rows(); ++r) {
    DenseMatrix xp = x, xm = x;
    xp(r, 0) += h;
    xm(r, 0) -= h;
    const double fd = (0.5 * (net.forward(xp) - target).squaredNorm() - 0.5 * (net.forward(xm) - target).squaredNorm()) / (2 * h);
    EXPECT_NEAR(dx(r, 0), fd, 1e-6);
  }
}

TEST(Mlp, ZeroUpstreamGivesZeroGradient) {
  const Mlp net = random_mlp({2, 4, 2}, 1);
  Mlp::Tape tape;
  net.forward(random_matrix(2, 3, 2), tape);
  std::vector<double> grad(static_cast<std::size_t>(net.num_params()), 0.0);
  net.backward(tape, DenseMatrix::Zero(2, 3), grad);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(Mlp, LinearLeastSquaresGradient) {
  Mlp net({3, 2});
  net.weight(0) = random_matrix(2, 3, 21);
  net.bias(0) = random_matrix(2, 1, 22).col(0);
  const DenseMatrix x = random_matrix(3, 5, 23), t = random_matrix(2, 5, 24);
  Mlp::Tape tape;
  const DenseMatrix r = net.forward(x, tape) - t;
  std::vector<double> grad(static_cast<std::size_t>(net.num_params()), 0.0);
  net.backward(tape, r, grad);
  // dL/dW = R X^T, dL/db = R 1 for L = |W X + b - T|^2 / 2.
  const DenseMatrix gw = r * x.transpose();
  const Vector gb = r.rowwise().sum();
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(grad[static_cast<std::size_t>(j * 2 + i)], gw(i, j), 1e-13);
  }
  EXPECT_NEAR(grad[6], gb(0), 1e-13);
  EXPECT_NEAR(grad[7], gb(1), 1e-13);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam(3, 0.1);
  std::vector<double> p = {1.0, 2.0, 3.0};
  const std::vector<double> g = {0.5, -2.0, 1e-3};
  adam.step(p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], 2.1, 1e-6);
  EXPECT_NEAR(p[2], 2.9, 1e-4);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
  Adam adam(1, 0.01);
  std::vector<double> p = {0.0};
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::sin(t) + 2 * p[0];
    adam.step(p, std::vector<double>{g});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], x, 1e-14);
  }
}

TEST(PlateauScheduler, InactiveDuringWarmup) {
  PlateauScheduler s(0.91, 50, 1e-6, 2000, 1e-8);
  double lr = 5e-3;
  for (int i = 0; i < 2000; ++i) lr = s.observe(1.0, lr);
  EXPECT_EQ(lr, 5e-3);
}

TEST(PlateauScheduler, ReducesEveryPatienceWindowAndFloors) {
  PlateauScheduler s(0.91, 50, 1e-6, 0, 1e-8);
  double lr = 5e-3;
  int changes = 0;
  for (int i = 0; i < 510; ++i) {
    const double next = s.observe(1.0, lr);
    if (next != lr) ++changes;
    lr = next;
  }
  EXPECT_GE(changes, 9);
  EXPECT_LE(changes, 10);
  for (int i = 0; i < 100000; ++i) lr = s.observe(1.0, lr);
  EXPECT_EQ(lr, 1e-6);
}

TEST(PlateauScheduler, ImprovementResetsCounter) {
  PlateauScheduler s(0.5, 3, 1e-6, 0, 1e-8);
  double lr = 1.0, loss = 1.0;
  for (int i = 0; i < 100; ++i) {
    loss *= 0.9;
    lr = s.observe(loss, lr);
  }
  EXPECT_EQ(lr, 1.0);
  EXPECT_EQ(s.reductions(), 0);
}

TEST(CouplingLayer, IdentityWhenHOneFZero) {
  const CouplingLayer layer(1, 1, InternalFn::ones(), InternalFn::ones(), InternalFn::zeros(), InternalFn::zeros());
  Vector z(2);
  z << 0.3, -0.7;
  EXPECT_EQ(layer.forward(z), z);
  EXPECT_EQ(layer.backward(z), z);
}

TEST(CouplingLayer, AdditiveConfiguration) {
  const Mlp f2 = random_mlp({1, 5, 5, 5, 1}, 3);
  const CouplingLayer layer = CouplingLayer::additive(1, f2);
  Vector z(2);
  z << 0.4, 0.9;
  const Vector y = layer.forward(z);
  EXPECT_EQ(y(0), z(0));
  EXPECT_NEAR(y(1), z(1) + f2.forward(Vector(z.head(1)))(0), 1e-15);
  const Vector back = layer.backward(y);
  EXPECT_NEAR(back(1), y(1) - f2.forward(Vector(y.head(1)))(0), 1e-15);
}

TEST(CouplingLayer, GeneralLayerInverts) {
  const InvertibleNet net = perturbed_general_net(31);
  const DenseMatrix z = random_matrix(4, 50, 32);
  EXPECT_LE((net.backward(net.forward(z)) - z).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CouplingLayer, DivisionByZeroDetected) {
  const CouplingLayer layer(1, 1, InternalFn::zeros(), InternalFn::ones(), InternalFn::zeros(), InternalFn::zeros());
  try {
    layer.backward(Vector(Vector::Ones(2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DivideByZero);
  }
}

TEST(InvertibleNet, RandomNetRoundTripDrift) {
  InvertibleArch arch;
  arch.m = 3;
  arch.num_layers = 2;
  arch.hidden = {10, 10, 10};
  const InvertibleNet net = InvertibleNet::build(arch, 17);
  const DenseMatrix z = random_matrix(6, 100, 18, 0.0, 1.0);
  const auto one = repeated_roundtrip_drift(net, z, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LE(one[0], 1e-12);
  const auto drift = repeated_roundtrip_drift(net, z, 200);
  ASSERT_EQ(drift.size(), 200u);
  EXPECT_LE(*std::max_element(drift.begin(), drift.end()), 1e-12);
}

TEST(InvertibleNet, LinearityLossGradientAdditive) {
  InvertibleArch arch;
  arch.m = 1;
  const InvertibleNet net = InvertibleNet::build(arch, 2);
  const DenseMatrix z = random_matrix(2, 12, 3, 0.0, 1.0);
  const DenseMatrix k = DenseMatrix::Identity(1, 1);
  std::vector<double> grad;
  net.linearity_loss(z, k, &grad);
  auto loss_at = [&](const std::vector<double>& th) {
    InvertibleNet n = net;
    n.set_params(th);
    return n.linearity_loss(z, k);
  };
  EXPECT_LE(fd_gradient_mismatch(net.params(), grad, loss_at), 1e-4);
}

TEST(InvertibleNet, LinearityLossGradientGeneralLayers) {
  const InvertibleNet net = perturbed_general_net(41);
  const DenseMatrix z = random_matrix(4, 9, 42, 0.0, 1.0);
  DenseMatrix k(2, 2);
  k << 2.0, 0.3, 0.3, 1.0;
  std::vector<double> grad;
  net.linearity_loss(z, k, &grad);
  auto loss_at = [&](const std::vector<double>& th) {
    InvertibleNet n = net;
    n.set_params(th);
    return n.linearity_loss(z, k);
  };
  EXPECT_LE(fd_gradient_mismatch(net.params(), grad, loss_at), 1e-4);
}

TEST(InvertibleNet, LossIsPermutationInvariant) {
  InvertibleArch arch;
  const InvertibleNet net = InvertibleNet::build(arch, 5);
  const DenseMatrix z = random_matrix(2, 10, 6, 0.0, 1.0);
  DenseMatrix p = z;
  for (int c = 0; c < 10; ++c) p.col(c) = z.col(9 - c);
  const DenseMatrix k = DenseMatrix::Identity(1, 1);
  EXPECT_NEAR(net.linearity_loss(z, k), net.linearity_loss(p, k), 1e-15);
}

TEST(InvertibleNet, EmbeddingSerialisationRoundTrip) {
  InvertibleArch arch;
  arch.m = 2;
  arch.num_layers = 2;
  EmbeddingModel model{InvertibleNet::build(arch, 9), normalize(gen_heat_tanh(4)).norm,
                       SpdMatrixSmall::identity(2)};
  std::stringstream ss;
  save_embedding(ss, model);
  const EmbeddingModel back = load_embedding(ss);
  EXPECT_EQ(back.net.params(), model.net.params());
  EXPECT_EQ(back.norm.eps_max, model.norm.eps_max);
  const DenseMatrix z = random_matrix(4, 5, 10);
  EXPECT_EQ(back.net.forward(z), model.net.forward(z));
}

TEST(Autoencoder, LossGradientMatchesFiniteDifferences) {
  AutoencoderArch arch;
  arch.m = 1;
  const AutoencoderPair ae = AutoencoderPair::build(arch, 3);
  const DenseMatrix z = random_matrix(2, 8, 4, 0.0, 1.0);
  const DenseMatrix k = DenseMatrix::Identity(1, 1);
  std::vector<double> grad;
  ae.loss(z, k, &grad);
  auto loss_at = [&](const std::vector<double>& th) {
    AutoencoderPair a = ae;
    a.set_params(th);
    return a.loss(z, k).total();
  };
  EXPECT_LE(fd_gradient_mismatch(ae.params(), grad, loss_at), 1e-4);
}

TEST(Autoencoder, IdentityPairReconstructsExactly) {
  const AutoencoderPair ae = AutoencoderPair::identity(1);
  const auto db = normalize(linear_db(10));
  const auto l = ae.loss(stack_points(db.points), DenseMatrix::Identity(1, 1));
  EXPECT_LE(l.reconstruction, 1e-30);
  EXPECT_LE(l.linearity, 1e-30);
}

TEST(Training, SqrtToyReachesFloor) {
  const auto db = normalize(gen_sqrt_toy(20));
  InvertibleArch arch;
  std::vector<double> finals;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto t = train_invertible(db, arch, toy_config(seed));
    EXPECT_LE(t.final_loss, 1e-5) << "seed " << seed;
    finals.push_back(t.final_loss);
    ASSERT_EQ(t.history.loss.size(), 30000u);
    EXPECT_NEAR(t.history.lr.front(), 5e-3, 1e-15);
    EXPECT_GE(*std::min_element(t.history.lr.begin(), t.history.lr.end()), 1e-6);
  }
  const auto [lo, hi] = std::minmax_element(finals.begin(), finals.end());
  EXPECT_LE(*hi / *lo, 100.0);
}

TEST(Training, LinearDatabaseIdentityEmbeddingIsExact) {
  const auto db = normalize(linear_db(20));
  InvertibleNet net = InvertibleNet::build(InvertibleArch{}, 0);
  net.set_params(std::vector<double>(net.params().size(), 0.0));
  EXPECT_EQ(net.linearity_loss(stack_points(db.points), DenseMatrix::Identity(1, 1)), 0.0);
}

TEST(Training, LinearDatabaseWithin500Epochs) {
  const auto db = normalize(linear_db(20));
  TrainConfig c;
  c.max_epochs = 500;
  c.initial_lr = 5e-3;
  const auto t = train_invertible(db, InvertibleArch{}, c);
  EXPECT_LT(t.final_loss, t.history.loss.front());
  EXPECT_LE(t.final_loss, 1e-8);
}

TEST(Training, DeterministicGivenSeed) {
  const auto db = normalize(gen_sqrt_toy(20));
  TrainConfig c = toy_config(4);
  c.max_epochs = 300;
  const auto a = train_invertible(db, InvertibleArch{}, c);
  const auto b = train_invertible(db, InvertibleArch{}, c);
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(a.history.loss, b.history.loss);
}

TEST(Training, MiniBatchDeterministic) {
  const auto db = normalize(gen_heat_tanh(10));
  TrainConfig c;
  c.batch_size = 20;
  c.max_epochs = 20;
  c.seed = 3;
  InvertibleArch arch;
  arch.m = 2;
  const auto a = train_invertible(db, arch, c);
  const auto b = train_invertible(db, arch, c);
  EXPECT_EQ(a.history.loss, b.history.loss);
}

TEST(Training, RejectsBadConfig) {
  TrainConfig c;
  c.lr_factor = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.lr_min = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Training, AutoencoderVersusInvertibleDrift) {
  const auto db = normalize(gen_bar_tanh());
  TrainConfig c;
  c.initial_lr = 0.05;
  c.max_epochs = 5000;
  const auto inv = train_invertible(db, InvertibleArch{}, c);
  const auto ae = train_autoencoder(db, AutoencoderArch{}, c);
  EXPECT_GT(ae.final_loss.reconstruction, 1e-10);
  EXPECT_EQ(ae.history.reconstruction.size(), ae.history.loss.size());
  // Comparable linearity after the same number of epochs.
  EXPECT_LE(ae.final_loss.linearity, 100.0 * std::max(inv.final_loss, 1e-8));
  const DenseMatrix pts = stack_points(db.points);
  const auto di = repeated_roundtrip_drift(inv.net, pts, 200);
  const auto da = repeated_roundtrip_drift(ae.net, pts, 200);
  EXPECT_LE(*std::max_element(di.begin(), di.end()), 1e-12);
  EXPECT_GT(da.back(), 1e-10);
  EXPECT_GE(da.back(), da.front());
}
