#pragma once

#include <span>
#include <vector>

namespace ddmech {

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(std::size_t n_params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// Reduce-on-plateau learning-rate schedule.  Inactive during the first
/// `warmup` observations; afterwards, when the loss has not improved on the
/// best value by more than `threshold` for more than `patience` consecutive
/// observations, the rate is multiplied by `factor` (floored at `min_lr`)
/// and the counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience, double min_lr, int warmup, double threshold);

  /// Feeds one loss observation and returns the learning rate to use next.
  double observe(double loss, double lr);
  int reductions() const { return reductions_; }

 private:
  double factor_;
  int patience_;
  double min_lr_;
  int warmup_;
  double threshold_;
  long seen_ = 0;
  double best_;
  int bad_ = 0;
  int reductions_ = 0;
};

}  // namespace ddmech
