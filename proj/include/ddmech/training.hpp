#pragma once

// Offline training of the embedding maps and round-trip stability checks.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddmech/autoencoder.hpp"
#include "ddmech/invertible_net.hpp"
#include "ddmech/phasespace.hpp"

namespace ddmech {

struct TrainConfig {
  double initial_lr = 5e-3;
  int plateau_patience = 50;
  double lr_factor = 0.91;
  double lr_min = 1e-6;
  int warmup_iters = 2000;
  double plateau_threshold = 1e-8;
  int max_epochs = 10000;
  int batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Per-epoch training record.  `reconstruction` is only filled for the
/// autoencoder.
struct LossHistory {
  std::vector<double> loss;
  std::vector<double> reconstruction;
  std::vector<double> lr;
};

struct InvertibleTraining {
  InvertibleNet net;
  LossHistory history;
  double final_loss = 0.0;  // mean linearity violation on the full database
};

struct AutoencoderTraining {
  AutoencoderPair net;
  LossHistory history;
  AutoencoderPair::Losses final_loss;
};

/// Minimises the mean linearity violation |sig_hat - K eps_hat|^2 of the
/// mapped database with Adam and a plateau schedule.  The database must be
/// normalised.  Throws NonFinite if the loss blows up.
InvertibleTraining train_invertible(const MaterialDatabase& db, const InvertibleArch& arch,
                                    const TrainConfig& cfg);
InvertibleTraining train_invertible(const MaterialDatabase& db, const InvertibleArch& arch,
                                    const TrainConfig& cfg, const DenseMatrix& k_fix);

AutoencoderTraining train_autoencoder(const MaterialDatabase& db, const AutoencoderArch& arch,
                                      const TrainConfig& cfg);
AutoencoderTraining train_autoencoder(const MaterialDatabase& db, const AutoencoderArch& arch,
                                      const TrainConfig& cfg, const DenseMatrix& k_fix);

/// Applies z <- F^-1(F(z)) (or G(F(z))) n_cycles times to the columns of
/// `points` and records, per cycle, the largest absolute deviation from the
/// starting points.
std::vector<double> repeated_roundtrip_drift(const InvertibleNet& net, const DenseMatrix& points,
                                             int n_cycles);
std::vector<double> repeated_roundtrip_drift(const AutoencoderPair& net, const DenseMatrix& points,
                                             int n_cycles);

/// `iter,loss[,reconstruction_loss]`
void write_loss_history_csv(std::ostream& out, const LossHistory& history);
void write_loss_history_csv(const std::string& path, const LossHistory& history);

}  // namespace ddmech
