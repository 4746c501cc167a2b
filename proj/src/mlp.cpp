#include "ddmech/mlp.hpp"

#include <cmath>

namespace ddmech {

namespace {

DenseMatrix apply_elu(const DenseMatrix& a) {
  return a.unaryExpr([](double x) { return elu(x); });
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error(ErrorKind::InvalidArgument, "Mlp needs at least two layer sizes");
  for (int s : sizes_) {
    if (s <= 0) throw Error(ErrorKind::InvalidArgument, "Mlp layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.push_back(DenseMatrix::Zero(sizes_[l + 1], sizes_[l]));
    biases_.push_back(Vector::Zero(sizes_[l + 1]));
  }
}

void Mlp::kaiming_uniform(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int l = 0; l < num_affine(); ++l) {
    const double fan_in = static_cast<double>(weights_[l].cols());
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index j = 0; j < weights_[l].cols(); ++j) {
      for (Eigen::Index i = 0; i < weights_[l].rows(); ++i) weights_[l](i, j) = w_bound * unit(rng);
    }
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = b_bound * unit(rng);
  }
}

int Mlp::num_params() const {
  int n = 0;
  for (int l = 0; l < num_affine(); ++l) {
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Vector Mlp::forward(const Vector& x) const {
  DenseMatrix out = forward(DenseMatrix(x));
  return out.col(0);
}

DenseMatrix Mlp::forward(const DenseMatrix& x) const {
  if (x.rows() != input_width()) throw Error(ErrorKind::DimensionMismatch, "Mlp input width");
  DenseMatrix a = x;
  for (int l = 0; l < num_affine(); ++l) {
    DenseMatrix z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = (l + 1 < num_affine()) ? apply_elu(z) : std::move(z);
  }
  return a;
}

DenseMatrix Mlp::forward(const DenseMatrix& x, Tape& tape) const {
  if (x.rows() != input_width()) throw Error(ErrorKind::DimensionMismatch, "Mlp input width");
  tape.inputs.resize(num_affine());
  tape.pre.resize(num_affine());
  DenseMatrix a = x;
  for (int l = 0; l < num_affine(); ++l) {
    tape.inputs[l] = a;
    DenseMatrix z = weights_[l] * a;
    z.colwise() += biases_[l];
    tape.pre[l] = z;
    a = (l + 1 < num_affine()) ? apply_elu(z) : std::move(z);
  }
  return a;
}

DenseMatrix Mlp::backward(const Tape& tape, const DenseMatrix& d_out, std::span<double> grad) const {
  if (static_cast<int>(grad.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "Mlp gradient buffer size");
  }
  // Offsets of each layer's block in the flat layout.
  std::vector<std::size_t> offset(num_affine());
  std::size_t pos = 0;
  for (int l = 0; l < num_affine(); ++l) {
    offset[l] = pos;
    pos += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }

  DenseMatrix delta = d_out;  // dL/d(pre) of the current layer
  for (int l = num_affine() - 1; l >= 0; --l) {
    if (l + 1 < num_affine()) {
      delta = delta.cwiseProduct(tape.pre[l].unaryExpr([](double x) { return elu_derivative(x); }));
    }
    Eigen::Map<DenseMatrix> gw(grad.data() + offset[l], weights_[l].rows(), weights_[l].cols());
    Eigen::Map<Vector> gb(grad.data() + offset[l] + weights_[l].size(), biases_[l].size());
    gw.noalias() += delta * tape.inputs[l].transpose();
    gb += delta.rowwise().sum();
    delta = weights_[l].transpose() * delta;
  }
  return delta;
}

void Mlp::get_params(std::span<double> out) const {
  if (static_cast<int>(out.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "Mlp parameter buffer size");
  }
  std::size_t pos = 0;
  for (int l = 0; l < num_affine(); ++l) {
    Eigen::Map<DenseMatrix>(out.data() + pos, weights_[l].rows(), weights_[l].cols()) = weights_[l];
    pos += weights_[l].size();
    Eigen::Map<Vector>(out.data() + pos, biases_[l].size()) = biases_[l];
    pos += biases_[l].size();
  }
}

void Mlp::set_params(std::span<const double> in) {
  if (static_cast<int>(in.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "Mlp parameter buffer size");
  }
  std::size_t pos = 0;
  for (int l = 0; l < num_affine(); ++l) {
    weights_[l] = Eigen::Map<const DenseMatrix>(in.data() + pos, weights_[l].rows(), weights_[l].cols());
    pos += weights_[l].size();
    biases_[l] = Eigen::Map<const Vector>(in.data() + pos, biases_[l].size());
    pos += biases_[l].size();
  }
}

}  // namespace ddmech
