#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddmech/mlp.hpp"

namespace ddmech {

struct AutoencoderArch {
  int m = 1;
  std::vector<int> hidden = {3, 3, 3};
};

/// Encoder F and decoder G, both 2m -> 2m MLPs.  G ~ F^-1 only in the least
/// squares sense enforced by the reconstruction term of the loss.
class AutoencoderPair {
 public:
  struct Losses {
    double linearity = 0.0;
    double reconstruction = 0.0;
    double total() const { return linearity + reconstruction; }
  };

  AutoencoderPair() = default;
  AutoencoderPair(Mlp encoder, Mlp decoder);

  static AutoencoderPair build(const AutoencoderArch& arch, std::uint64_t seed);
  /// Single linear layers with identity weights on both sides.
  static AutoencoderPair identity(int m);

  int width() const { return encoder_.input_width(); }
  int num_params() const { return encoder_.num_params() + decoder_.num_params(); }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  DenseMatrix encode(const DenseMatrix& z) const { return encoder_.forward(z); }
  DenseMatrix decode(const DenseMatrix& y) const { return decoder_.forward(y); }
  Vector encode(const Vector& z) const { return encoder_.forward(z); }
  Vector decode(const Vector& y) const { return decoder_.forward(y); }

  std::vector<double> params() const;
  void set_params(std::span<const double> theta);

  /// Linearity term on F(z) plus reconstruction term
  /// (1/(B 2m)) sum_i |z_i - G(F(z_i))|^2, unit weights.
  Losses loss(const DenseMatrix& z, const DenseMatrix& k, std::vector<double>* grad = nullptr) const;

 private:
  Mlp encoder_;
  Mlp decoder_;
};

}  // namespace ddmech
