#include "ddmech/autoencoder.hpp"

#include "ddmech/invertible_net.hpp"

namespace ddmech {

AutoencoderPair::AutoencoderPair(Mlp encoder, Mlp decoder)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  const int w = encoder_.input_width();
  if (encoder_.output_width() != w || decoder_.input_width() != w || decoder_.output_width() != w) {
    throw Error(ErrorKind::DimensionMismatch, "autoencoder widths must all be 2m");
  }
}

AutoencoderPair AutoencoderPair::build(const AutoencoderArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> sizes{2 * arch.m};
  sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
  sizes.push_back(2 * arch.m);
  Mlp enc(sizes), dec(sizes);
  enc.kaiming_uniform(rng);
  dec.kaiming_uniform(rng);
  return {std::move(enc), std::move(dec)};
}

AutoencoderPair AutoencoderPair::identity(int m) {
  Mlp enc({2 * m, 2 * m}), dec({2 * m, 2 * m});
  enc.weight(0).setIdentity();
  dec.weight(0).setIdentity();
  return {std::move(enc), std::move(dec)};
}

std::vector<double> AutoencoderPair::params() const {
  std::vector<double> theta(num_params());
  std::span<double> s(theta);
  encoder_.get_params(s.subspan(0, encoder_.num_params()));
  decoder_.get_params(s.subspan(encoder_.num_params()));
  return theta;
}

void AutoencoderPair::set_params(std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "parameter vector size");
  }
  encoder_.set_params(theta.subspan(0, encoder_.num_params()));
  decoder_.set_params(theta.subspan(encoder_.num_params()));
}

AutoencoderPair::Losses AutoencoderPair::loss(const DenseMatrix& z, const DenseMatrix& k,
                                              std::vector<double>* grad) const {
  if (z.rows() != width() || 2 * k.rows() != width()) {
    throw Error(ErrorKind::DimensionMismatch, "autoencoder loss shapes");
  }
  const double scale = 1.0 / static_cast<double>(z.cols() * z.rows());
  Losses out;
  if (!grad) {
    const DenseMatrix y = encoder_.forward(z);
    out.linearity = linearity_term(y, k, nullptr);
    out.reconstruction = scale * (z - decoder_.forward(y)).squaredNorm();
    return out;
  }

  Mlp::Tape enc_tape, dec_tape;
  const DenseMatrix y = encoder_.forward(z, enc_tape);
  const DenseMatrix r = decoder_.forward(y, dec_tape);
  DenseMatrix d_y;
  out.linearity = linearity_term(y, k, &d_y);
  out.reconstruction = scale * (z - r).squaredNorm();

  grad->assign(num_params(), 0.0);
  std::span<double> g(*grad);
  d_y += decoder_.backward(dec_tape, 2.0 * scale * (r - z), g.subspan(encoder_.num_params()));
  encoder_.backward(enc_tape, d_y, g.subspan(0, encoder_.num_params()));
  return out;
}

}  // namespace ddmech
