#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ddmech/numkernel.hpp"

namespace ddmech {

/// Exponential linear unit and its derivative.
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

/// Fully connected network, ELU on hidden layers and identity on the output.
/// Batched evaluation works column-wise: each column of the input is one
/// sample.
class Mlp {
 public:
  /// Intermediate values of a batched forward pass, consumed by backward().
  struct Tape {
    std::vector<DenseMatrix> inputs;  // input of each affine layer
    std::vector<DenseMatrix> pre;     // affine output before activation
  };

  Mlp() = default;
  /// Zero weights and biases; layer_sizes = {in, hidden..., out}.
  explicit Mlp(std::vector<int> layer_sizes);

  /// Uniform Kaiming initialisation: weights in +-sqrt(6/fan_in), biases in
  /// +-1/sqrt(fan_in).
  void kaiming_uniform(std::mt19937_64& rng);

  int input_width() const { return sizes_.front(); }
  int output_width() const { return sizes_.back(); }
  int num_affine() const { return static_cast<int>(weights_.size()); }
  int num_params() const;
  const std::vector<int>& layer_sizes() const { return sizes_; }

  DenseMatrix& weight(int layer) { return weights_[layer]; }
  const DenseMatrix& weight(int layer) const { return weights_[layer]; }
  Vector& bias(int layer) { return biases_[layer]; }
  const Vector& bias(int layer) const { return biases_[layer]; }

  Vector forward(const Vector& x) const;
  DenseMatrix forward(const DenseMatrix& x) const;
  DenseMatrix forward(const DenseMatrix& x, Tape& tape) const;

  /// Reverse pass.  Adds dL/dtheta into `grad` (layout of get_params) and
  /// returns dL/dx for the batch.
  DenseMatrix backward(const Tape& tape, const DenseMatrix& d_out, std::span<double> grad) const;

  /// Parameter layout: per layer, weight (column-major) then bias.
  void get_params(std::span<double> out) const;
  void set_params(std::span<const double> in);

 private:
  std::vector<int> sizes_;
  std::vector<DenseMatrix> weights_;
  std::vector<Vector> biases_;
};

}  // namespace ddmech
