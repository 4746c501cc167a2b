#pragma once

// Invertible network built from additive/multiplicative coupling layers:
//   y1 = z1 * h1(z2) + f1(z2)
//   y2 = z2 * h2(y1) + f2(y1)
// with the exact inverse
//   z2 = (y2 - f2(y1)) / h2(y1)
//   z1 = (y1 - f1(z2)) / h1(z2)

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ddmech/mlp.hpp"
#include "ddmech/phasespace.hpp"

namespace ddmech {

/// One of the four internal functions of a coupling layer: a constant vector
/// of ones, a constant vector of zeros, or an MLP.
struct InternalFn {
  enum class Kind { Ones, Zeros, Network };

  Kind kind = Kind::Zeros;
  Mlp net;

  static InternalFn ones() { return {Kind::Ones, {}}; }
  static InternalFn zeros() { return {Kind::Zeros, {}}; }
  static InternalFn network(Mlp m) { return {Kind::Network, std::move(m)}; }

  bool trainable() const { return kind == Kind::Network; }
  int num_params() const { return trainable() ? net.num_params() : 0; }
  DenseMatrix eval(const DenseMatrix& x, int out_rows) const;
  DenseMatrix eval(const DenseMatrix& x, int out_rows, Mlp::Tape& tape) const;
};

class CouplingLayer {
 public:
  struct Tape {
    DenseMatrix z1, z2, y1, h1, h2;
    Mlp::Tape h1_tape, h2_tape, f1_tape, f2_tape;
  };

  CouplingLayer() = default;
  CouplingLayer(int m1, int m2, InternalFn h1, InternalFn h2, InternalFn f1, InternalFn f2);

  /// h1 = h2 = 1, f1 = 0, f2 = MLP: y = (z1, z2 + f2(z1)).
  static CouplingLayer additive(int m, Mlp f2);

  int m1() const { return m1_; }
  int m2() const { return m2_; }
  int width() const { return m1_ + m2_; }
  int num_params() const;

  const InternalFn& h1() const { return h1_; }
  const InternalFn& h2() const { return h2_; }
  const InternalFn& f1() const { return f1_; }
  const InternalFn& f2() const { return f2_; }
  InternalFn& h1() { return h1_; }
  InternalFn& h2() { return h2_; }
  InternalFn& f1() { return f1_; }
  InternalFn& f2() { return f2_; }

  Vector forward(const Vector& z) const;
  DenseMatrix forward(const DenseMatrix& z) const;
  DenseMatrix forward(const DenseMatrix& z, Tape& tape) const;
  /// Throws DivideByZero if an h component vanishes.
  Vector backward(const Vector& y) const;
  DenseMatrix backward(const DenseMatrix& y) const;

  /// Reverse-mode pass through the forward map; accumulates parameter
  /// gradients (layout of get_params) and returns dL/dz.
  DenseMatrix gradient(const Tape& tape, const DenseMatrix& d_out, std::span<double> grad) const;

  void get_params(std::span<double> out) const;
  void set_params(std::span<const double> in);

 private:
  int m1_ = 0;
  int m2_ = 0;
  InternalFn h1_, h2_, f1_, f2_;
};

/// Architecture descriptor used to build (and rebuild) a network.
struct InvertibleArch {
  int m = 1;                    // phase-space half width; network width is 2m
  int num_layers = 1;
  std::vector<int> hidden = {5, 5, 5};
  /// true: h1 = h2 = 1, f1 = 0 (only f2 trainable).  false: all four
  /// internal functions are MLPs, with h initialised to the constant 1.
  bool additive = true;
};

class InvertibleNet {
 public:
  InvertibleNet() = default;
  explicit InvertibleNet(std::vector<CouplingLayer> layers);

  static InvertibleNet build(const InvertibleArch& arch, std::uint64_t seed);

  int width() const { return layers_.empty() ? 0 : layers_.front().width(); }
  int num_params() const;
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }

  Vector forward(const Vector& z) const;
  DenseMatrix forward(const DenseMatrix& z) const;
  Vector backward(const Vector& y) const;
  DenseMatrix backward(const DenseMatrix& y) const;

  std::vector<double> params() const;
  void set_params(std::span<const double> theta);

  /// Mean linearity violation (1/(B m)) sum_i |sig_hat_i - K eps_hat_i|^2 over
  /// the columns of `z` (stacked [eps; sig]).  Fills `grad` when non-null.
  double linearity_loss(const DenseMatrix& z, const DenseMatrix& k,
                        std::vector<double>* grad = nullptr) const;

 private:
  std::vector<CouplingLayer> layers_;
};

/// Linearity term shared by the invertible net and the autoencoder: returns
/// the loss for mapped points `y` and writes dL/dy into `d_y` when non-null.
double linearity_term(const DenseMatrix& y, const DenseMatrix& k, DenseMatrix* d_y);

/// Packs database points column-wise as [eps; sig].
DenseMatrix stack_points(const std::vector<PhasePoint>& points);

/// Trained map plus what is needed to apply it to physical data.
struct EmbeddingModel {
  InvertibleNet net;
  NormalizationTransform norm;
  SpdMatrixSmall k_fix;
};

void save_embedding(std::ostream& out, const EmbeddingModel& model);
void save_embedding(const std::string& path, const EmbeddingModel& model);
EmbeddingModel load_embedding(std::istream& in);
EmbeddingModel load_embedding(const std::string& path);

}  // namespace ddmech
