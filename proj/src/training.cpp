#include "ddmech/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "ddmech/optim.hpp"

namespace ddmech {

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "initial_lr must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "lr_factor must lie in (0, 1)");
  }
  if (!(lr_min < initial_lr)) throw Error(ErrorKind::InvalidArgument, "lr_min must be below initial_lr");
  if (max_epochs < 1) throw Error(ErrorKind::InvalidArgument, "max_epochs must be >= 1");
  if (batch_size < 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 0");
}

namespace {

// Fisher-Yates with an explicit modulus so the order only depends on the
// engine output sequence.
void shuffle_indices(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

DenseMatrix gather(const DenseMatrix& z, const std::vector<Eigen::Index>& idx, std::size_t begin,
                   std::size_t end) {
  DenseMatrix out(z.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out.col(static_cast<Eigen::Index>(i - begin)) = z.col(idx[i]);
  return out;
}

void require_normalized(const MaterialDatabase& db) {
  if (db.empty()) throw Error(ErrorKind::InvalidArgument, "cannot train on an empty database");
  if (!db.normalized()) throw Error(ErrorKind::InvalidArgument, "training requires a normalised database");
}

// Generic loop shared by both architectures.  `step` evaluates the loss on a
// batch, fills the gradient and returns {loss, reconstruction}.
template <typename StepFn>
LossHistory run_training(const DenseMatrix& z, std::vector<double>& theta, const TrainConfig& cfg,
                         bool track_reconstruction, StepFn&& step) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(theta.size(), cfg.initial_lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  PlateauScheduler sched(cfg.lr_factor, cfg.plateau_patience, cfg.lr_min, cfg.warmup_iters,
                         cfg.plateau_threshold);

  const std::size_t n = static_cast<std::size_t>(z.cols());
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min<std::size_t>(cfg.batch_size, n);
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});

  LossHistory history;
  std::vector<double> grad;
  double lr = cfg.initial_lr;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0, recon_sum = 0.0;
    std::size_t n_batches = 0;
    if (batch == n) {
      const auto [loss, recon] = step(z, grad);
      loss_sum = loss;
      recon_sum = recon;
      adam.step(theta, grad);
      n_batches = 1;
    } else {
      shuffle_indices(idx, rng);
      for (std::size_t b = 0; b < n; b += batch) {
        const DenseMatrix zb = gather(z, idx, b, std::min(n, b + batch));
        const auto [loss, recon] = step(zb, grad);
        loss_sum += loss;
        recon_sum += recon;
        adam.step(theta, grad);
        ++n_batches;
      }
    }
    const double loss = loss_sum / static_cast<double>(n_batches);
    const double recon = recon_sum / static_cast<double>(n_batches);
    if (!std::isfinite(loss) || !std::isfinite(recon)) {
      throw Error(ErrorKind::NonFinite,
                  "training loss became non-finite at epoch " + std::to_string(epoch));
    }
    history.loss.push_back(loss);
    history.lr.push_back(lr);
    lr = sched.observe(loss + recon, lr);
    adam.set_lr(lr);
    if (track_reconstruction) history.reconstruction.push_back(recon);
  }
  return history;
}

}  // namespace

InvertibleTraining train_invertible(const MaterialDatabase& db, const InvertibleArch& arch,
                                    const TrainConfig& cfg) {
  return train_invertible(db, arch, cfg, DenseMatrix::Identity(db.m, db.m));
}

InvertibleTraining train_invertible(const MaterialDatabase& db, const InvertibleArch& arch,
                                    const TrainConfig& cfg, const DenseMatrix& k_fix) {
  require_normalized(db);
  if (arch.m != db.m || k_fix.rows() != db.m) {
    throw Error(ErrorKind::DimensionMismatch, "architecture width does not match database");
  }
  InvertibleTraining out;
  out.net = InvertibleNet::build(arch, cfg.seed);
  const DenseMatrix z = stack_points(db.points);
  std::vector<double> theta = out.net.params();
  InvertibleNet& net = out.net;
  out.history = run_training(z, theta, cfg, false, [&](const DenseMatrix& zb, std::vector<double>& grad) {
    net.set_params(theta);
    return std::pair{net.linearity_loss(zb, k_fix, &grad), 0.0};
  });
  net.set_params(theta);
  out.final_loss = net.linearity_loss(z, k_fix);
  return out;
}

AutoencoderTraining train_autoencoder(const MaterialDatabase& db, const AutoencoderArch& arch,
                                      const TrainConfig& cfg) {
  return train_autoencoder(db, arch, cfg, DenseMatrix::Identity(db.m, db.m));
}

AutoencoderTraining train_autoencoder(const MaterialDatabase& db, const AutoencoderArch& arch,
                                      const TrainConfig& cfg, const DenseMatrix& k_fix) {
  require_normalized(db);
  if (arch.m != db.m || k_fix.rows() != db.m) {
    throw Error(ErrorKind::DimensionMismatch, "architecture width does not match database");
  }
  AutoencoderTraining out;
  out.net = AutoencoderPair::build(arch, cfg.seed);
  const DenseMatrix z = stack_points(db.points);
  std::vector<double> theta = out.net.params();
  AutoencoderPair& net = out.net;
  out.history = run_training(z, theta, cfg, true, [&](const DenseMatrix& zb, std::vector<double>& grad) {
    net.set_params(theta);
    const auto l = net.loss(zb, k_fix, &grad);
    return std::pair{l.linearity, l.reconstruction};
  });
  net.set_params(theta);
  out.final_loss = net.loss(z, k_fix);
  return out;
}

namespace {

template <typename RoundTrip>
std::vector<double> drift_curve(const DenseMatrix& points, int n_cycles, RoundTrip&& once) {
  if (n_cycles < 1) throw Error(ErrorKind::InvalidArgument, "n_cycles must be >= 1");
  std::vector<double> drift;
  drift.reserve(n_cycles);
  DenseMatrix z = points;
  for (int c = 0; c < n_cycles; ++c) {
    z = once(z);
    drift.push_back((z - points).cwiseAbs().maxCoeff());
  }
  return drift;
}

}  // namespace

std::vector<double> repeated_roundtrip_drift(const InvertibleNet& net, const DenseMatrix& points,
                                             int n_cycles) {
  return drift_curve(points, n_cycles,
                     [&](const DenseMatrix& z) { return net.backward(net.forward(z)); });
}

std::vector<double> repeated_roundtrip_drift(const AutoencoderPair& net, const DenseMatrix& points,
                                             int n_cycles) {
  return drift_curve(points, n_cycles,
                     [&](const DenseMatrix& z) { return net.decode(net.encode(z)); });
}

void write_loss_history_csv(std::ostream& out, const LossHistory& history) {
  const bool recon = !history.reconstruction.empty();
  out << "iter,loss" << (recon ? ",reconstruction_loss" : "") << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < history.loss.size(); ++i) {
    out << i << ',' << history.loss[i];
    if (recon) out << ',' << history.reconstruction[i];
    out << '\n';
  }
}

void write_loss_history_csv(const std::string& path, const LossHistory& history) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  write_loss_history_csv(out, history);
}

}  // namespace ddmech
