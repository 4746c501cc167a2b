#include "ddmech/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddmech/error.hpp"

namespace ddmech {

Adam::Adam(std::size_t n_params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "Adam parameter count");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

PlateauScheduler::PlateauScheduler(double factor, int patience, double min_lr, int warmup,
                                   double threshold)
    : factor_(factor), patience_(patience), min_lr_(min_lr), warmup_(warmup),
      threshold_(threshold), best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "plateau factor must lie in (0, 1)");
  }
}

double PlateauScheduler::observe(double loss, double lr) {
  ++seen_;
  const bool improved = loss < best_ - threshold_;
  if (improved) best_ = loss;
  if (seen_ <= warmup_) return lr;
  bad_ = improved ? 0 : bad_ + 1;
  if (bad_ > patience_) {
    bad_ = 0;
    const double next = std::max(lr * factor_, min_lr_);
    if (next < lr) ++reductions_;
    return next;
  }
  return lr;
}

}  // namespace ddmech
