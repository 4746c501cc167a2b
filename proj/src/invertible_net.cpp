#include "ddmech/invertible_net.hpp"

#include <fstream>
#include <json.hpp>

namespace ddmech {

DenseMatrix InternalFn::eval(const DenseMatrix& x, int out_rows) const {
  switch (kind) {
    case Kind::Ones: return DenseMatrix::Ones(out_rows, x.cols());
    case Kind::Zeros: return DenseMatrix::Zero(out_rows, x.cols());
    case Kind::Network: return net.forward(x);
  }
  return {};
}

DenseMatrix InternalFn::eval(const DenseMatrix& x, int out_rows, Mlp::Tape& tape) const {
  if (kind == Kind::Network) return net.forward(x, tape);
  return eval(x, out_rows);
}

// ---------------------------------------------------------------------------

CouplingLayer::CouplingLayer(int m1, int m2, InternalFn h1, InternalFn h2, InternalFn f1,
                             InternalFn f2)
    : m1_(m1), m2_(m2), h1_(std::move(h1)), h2_(std::move(h2)), f1_(std::move(f1)),
      f2_(std::move(f2)) {
  if (m1_ <= 0 || m2_ <= 0) throw Error(ErrorKind::InvalidArgument, "coupling split must be positive");
  auto check = [](const InternalFn& fn, int in, int out, const char* name) {
    if (!fn.trainable()) return;
    if (fn.net.input_width() != in || fn.net.output_width() != out) {
      throw Error(ErrorKind::DimensionMismatch, std::string("coupling internal function ") + name);
    }
  };
  check(h1_, m2_, m1_, "h1");
  check(f1_, m2_, m1_, "f1");
  check(h2_, m1_, m2_, "h2");
  check(f2_, m1_, m2_, "f2");
}

CouplingLayer CouplingLayer::additive(int m, Mlp f2) {
  return CouplingLayer(m, m, InternalFn::ones(), InternalFn::ones(), InternalFn::zeros(),
                       InternalFn::network(std::move(f2)));
}

int CouplingLayer::num_params() const {
  return h1_.num_params() + h2_.num_params() + f1_.num_params() + f2_.num_params();
}

Vector CouplingLayer::forward(const Vector& z) const {
  DenseMatrix y = forward(DenseMatrix(z));
  return y.col(0);
}

DenseMatrix CouplingLayer::forward(const DenseMatrix& z) const {
  if (z.rows() != width()) throw Error(ErrorKind::DimensionMismatch, "coupling layer input width");
  const DenseMatrix z1 = z.topRows(m1_);
  const DenseMatrix z2 = z.bottomRows(m2_);
  DenseMatrix y(width(), z.cols());
  y.topRows(m1_) = z1.cwiseProduct(h1_.eval(z2, m1_)) + f1_.eval(z2, m1_);
  const DenseMatrix y1 = y.topRows(m1_);
  y.bottomRows(m2_) = z2.cwiseProduct(h2_.eval(y1, m2_)) + f2_.eval(y1, m2_);
  return y;
}

DenseMatrix CouplingLayer::forward(const DenseMatrix& z, Tape& t) const {
  if (z.rows() != width()) throw Error(ErrorKind::DimensionMismatch, "coupling layer input width");
  t.z1 = z.topRows(m1_);
  t.z2 = z.bottomRows(m2_);
  t.h1 = h1_.eval(t.z2, m1_, t.h1_tape);
  t.y1 = t.z1.cwiseProduct(t.h1) + f1_.eval(t.z2, m1_, t.f1_tape);
  t.h2 = h2_.eval(t.y1, m2_, t.h2_tape);
  DenseMatrix y(width(), z.cols());
  y.topRows(m1_) = t.y1;
  y.bottomRows(m2_) = t.z2.cwiseProduct(t.h2) + f2_.eval(t.y1, m2_, t.f2_tape);
  return y;
}

namespace {

void check_nonzero(const DenseMatrix& h, const char* name) {
  if ((h.array() == 0.0).any()) {
    throw Error(ErrorKind::DivideByZero, std::string("coupling inverse: ") + name + " has a zero component");
  }
}

}  // namespace

Vector CouplingLayer::backward(const Vector& y) const {
  DenseMatrix z = backward(DenseMatrix(y));
  return z.col(0);
}

DenseMatrix CouplingLayer::backward(const DenseMatrix& y) const {
  if (y.rows() != width()) throw Error(ErrorKind::DimensionMismatch, "coupling layer input width");
  const DenseMatrix y1 = y.topRows(m1_);
  const DenseMatrix y2 = y.bottomRows(m2_);
  DenseMatrix z(width(), y.cols());
  const DenseMatrix h2 = h2_.eval(y1, m2_);
  check_nonzero(h2, "h2");
  z.bottomRows(m2_) = (y2 - f2_.eval(y1, m2_)).cwiseQuotient(h2);
  const DenseMatrix z2 = z.bottomRows(m2_);
  const DenseMatrix h1 = h1_.eval(z2, m1_);
  check_nonzero(h1, "h1");
  z.topRows(m1_) = (y1 - f1_.eval(z2, m1_)).cwiseQuotient(h1);
  return z;
}

DenseMatrix CouplingLayer::gradient(const Tape& t, const DenseMatrix& d_out,
                                    std::span<double> grad) const {
  if (static_cast<int>(grad.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "coupling gradient buffer size");
  }
  const std::size_t n_h1 = h1_.num_params();
  const std::size_t n_h2 = h2_.num_params();
  const std::size_t n_f1 = f1_.num_params();
  const auto g_h1 = grad.subspan(0, n_h1);
  const auto g_h2 = grad.subspan(n_h1, n_h2);
  const auto g_f1 = grad.subspan(n_h1 + n_h2, n_f1);
  const auto g_f2 = grad.subspan(n_h1 + n_h2 + n_f1);

  const DenseMatrix d_y1 = d_out.topRows(m1_);
  const DenseMatrix d_y2 = d_out.bottomRows(m2_);

  // Second half: y2 = z2 * h2(y1) + f2(y1).
  DenseMatrix d_z2 = d_y2.cwiseProduct(t.h2);
  DenseMatrix g1 = d_y1;
  if (h2_.trainable()) g1 += h2_.net.backward(t.h2_tape, d_y2.cwiseProduct(t.z2), g_h2);
  if (f2_.trainable()) g1 += f2_.net.backward(t.f2_tape, d_y2, g_f2);

  // First half: y1 = z1 * h1(z2) + f1(z2).
  DenseMatrix d_z1 = g1.cwiseProduct(t.h1);
  if (h1_.trainable()) d_z2 += h1_.net.backward(t.h1_tape, g1.cwiseProduct(t.z1), g_h1);
  if (f1_.trainable()) d_z2 += f1_.net.backward(t.f1_tape, g1, g_f1);

  DenseMatrix d_z(width(), d_out.cols());
  d_z.topRows(m1_) = d_z1;
  d_z.bottomRows(m2_) = d_z2;
  return d_z;
}

void CouplingLayer::get_params(std::span<double> out) const {
  std::size_t pos = 0;
  for (const InternalFn* fn : {&h1_, &h2_, &f1_, &f2_}) {
    if (!fn->trainable()) continue;
    fn->net.get_params(out.subspan(pos, fn->num_params()));
    pos += fn->num_params();
  }
}

void CouplingLayer::set_params(std::span<const double> in) {
  std::size_t pos = 0;
  for (InternalFn* fn : {&h1_, &h2_, &f1_, &f2_}) {
    if (!fn->trainable()) continue;
    fn->net.set_params(in.subspan(pos, fn->num_params()));
    pos += fn->num_params();
  }
}

// ---------------------------------------------------------------------------

InvertibleNet::InvertibleNet(std::vector<CouplingLayer> layers) : layers_(std::move(layers)) {
  for (const auto& l : layers_) {
    if (l.width() != layers_.front().width()) {
      throw Error(ErrorKind::DimensionMismatch, "coupling layers must share one width");
    }
  }
}

InvertibleNet InvertibleNet::build(const InvertibleArch& arch, std::uint64_t seed) {
  if (arch.m <= 0 || arch.num_layers <= 0) {
    throw Error(ErrorKind::InvalidArgument, "invertible architecture needs m > 0 and layers > 0");
  }
  std::mt19937_64 rng(seed);
  auto make_mlp = [&](bool unit_output) {
    std::vector<int> sizes{arch.m};
    sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
    sizes.push_back(arch.m);
    Mlp net(sizes);
    net.kaiming_uniform(rng);
    if (unit_output) {
      // Start h at exactly one so the layer begins as an additive coupling.
      net.weight(net.num_affine() - 1).setZero();
      net.bias(net.num_affine() - 1).setOnes();
    }
    return net;
  };
  std::vector<CouplingLayer> layers;
  for (int i = 0; i < arch.num_layers; ++i) {
    if (arch.additive) {
      layers.push_back(CouplingLayer::additive(arch.m, make_mlp(false)));
    } else {
      InternalFn h1 = InternalFn::network(make_mlp(true));
      InternalFn h2 = InternalFn::network(make_mlp(true));
      InternalFn f1 = InternalFn::network(make_mlp(false));
      InternalFn f2 = InternalFn::network(make_mlp(false));
      layers.emplace_back(arch.m, arch.m, std::move(h1), std::move(h2), std::move(f1), std::move(f2));
    }
  }
  return InvertibleNet(std::move(layers));
}

int InvertibleNet::num_params() const {
  int n = 0;
  for (const auto& l : layers_) n += l.num_params();
  return n;
}

Vector InvertibleNet::forward(const Vector& z) const {
  Vector y = z;
  for (const auto& l : layers_) y = l.forward(y);
  return y;
}

DenseMatrix InvertibleNet::forward(const DenseMatrix& z) const {
  DenseMatrix y = z;
  for (const auto& l : layers_) y = l.forward(y);
  return y;
}

Vector InvertibleNet::backward(const Vector& y) const {
  Vector z = y;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) z = it->backward(z);
  return z;
}

DenseMatrix InvertibleNet::backward(const DenseMatrix& y) const {
  DenseMatrix z = y;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) z = it->backward(z);
  return z;
}

std::vector<double> InvertibleNet::params() const {
  std::vector<double> theta(num_params());
  std::size_t pos = 0;
  for (const auto& l : layers_) {
    l.get_params(std::span<double>(theta).subspan(pos, l.num_params()));
    pos += l.num_params();
  }
  return theta;
}

void InvertibleNet::set_params(std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != num_params()) {
    throw Error(ErrorKind::DimensionMismatch, "parameter vector size");
  }
  std::size_t pos = 0;
  for (auto& l : layers_) {
    l.set_params(theta.subspan(pos, l.num_params()));
    pos += l.num_params();
  }
}

double linearity_term(const DenseMatrix& y, const DenseMatrix& k, DenseMatrix* d_y) {
  const auto m = k.rows();
  const auto batch = y.cols();
  const DenseMatrix r = y.bottomRows(m) - k * y.topRows(m);
  const double scale = 1.0 / static_cast<double>(batch * m);
  if (d_y) {
    d_y->resize(y.rows(), batch);
    d_y->bottomRows(m) = 2.0 * scale * r;
    d_y->topRows(m) = -2.0 * scale * (k.transpose() * r);
  }
  return scale * r.squaredNorm();
}

double InvertibleNet::linearity_loss(const DenseMatrix& z, const DenseMatrix& k,
                                     std::vector<double>* grad) const {
  if (2 * k.rows() != width() || z.rows() != width()) {
    throw Error(ErrorKind::DimensionMismatch, "linearity loss shapes");
  }
  if (!grad) return linearity_term(forward(z), k, nullptr);

  std::vector<CouplingLayer::Tape> tapes(layers_.size());
  DenseMatrix y = z;
  for (std::size_t i = 0; i < layers_.size(); ++i) y = layers_[i].forward(y, tapes[i]);
  DenseMatrix d_y;
  const double loss = linearity_term(y, k, &d_y);

  grad->assign(num_params(), 0.0);
  std::vector<std::size_t> offset(layers_.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offset[i] = pos;
    pos += layers_[i].num_params();
  }
  std::span<double> g(*grad);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    d_y = layers_[i].gradient(tapes[i], d_y, g.subspan(offset[i], layers_[i].num_params()));
  }
  return loss;
}

DenseMatrix stack_points(const std::vector<PhasePoint>& points) {
  if (points.empty()) return {};
  const int m = points.front().m();
  DenseMatrix z(2 * m, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    z.col(static_cast<Eigen::Index>(i)) << points[i].eps, points[i].sig;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json internal_to_json(const InternalFn& fn) {
  switch (fn.kind) {
    case InternalFn::Kind::Ones: return {{"kind", "ones"}};
    case InternalFn::Kind::Zeros: return {{"kind", "zeros"}};
    case InternalFn::Kind::Network: return {{"kind", "mlp"}, {"sizes", fn.net.layer_sizes()}};
  }
  return {};
}

InternalFn internal_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ones") return InternalFn::ones();
  if (kind == "zeros") return InternalFn::zeros();
  if (kind == "mlp") return InternalFn::network(Mlp(j.at("sizes").get<std::vector<int>>()));
  throw Error(ErrorKind::Io, "unknown internal function kind '" + kind + "'");
}

}  // namespace

void save_embedding(std::ostream& out, const EmbeddingModel& model) {
  json layers = json::array();
  for (const auto& l : model.net.layers()) {
    layers.push_back({{"split", {l.m1(), l.m2()}},
                      {"h1", internal_to_json(l.h1())},
                      {"h2", internal_to_json(l.h2())},
                      {"f1", internal_to_json(l.f1())},
                      {"f2", internal_to_json(l.f2())}});
  }
  json norm = nullptr;
  if (!model.norm.is_identity()) {
    norm = {{"floor", model.norm.floor},
            {"eps_min", to_std(model.norm.eps_min)},
            {"eps_max", to_std(model.norm.eps_max)},
            {"sig_min", to_std(model.norm.sig_min)},
            {"sig_max", to_std(model.norm.sig_max)}};
  }
  json k = json::array();
  for (int i = 0; i < model.k_fix.dim(); ++i) {
    k.push_back(to_std(model.k_fix.matrix().row(i).transpose()));
  }
  json doc = {{"format", "ddmech-embedding"},
              {"version", kFormatVersion},
              {"width", model.net.width()},
              {"layers", layers},
              {"params", model.net.params()},
              {"normalization", norm},
              {"k_fix", k}};
  out << doc.dump(1) << '\n';
}

void save_embedding(const std::string& path, const EmbeddingModel& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  save_embedding(out, model);
}

EmbeddingModel load_embedding(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("embedding file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "ddmech-embedding") throw Error(ErrorKind::Io, "not an embedding file");
    if (doc.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorKind::Io, "unsupported embedding file version");
    }
    std::vector<CouplingLayer> layers;
    for (const auto& lj : doc.at("layers")) {
      const auto split = lj.at("split").get<std::vector<int>>();
      layers.emplace_back(split.at(0), split.at(1), internal_from_json(lj.at("h1")),
                          internal_from_json(lj.at("h2")), internal_from_json(lj.at("f1")),
                          internal_from_json(lj.at("f2")));
    }
    EmbeddingModel model;
    model.net = InvertibleNet(std::move(layers));
    model.net.set_params(doc.at("params").get<std::vector<double>>());
    if (!doc.at("normalization").is_null()) {
      const auto& nj = doc.at("normalization");
      model.norm.floor = nj.at("floor").get<double>();
      model.norm.eps_min = to_vector(nj.at("eps_min"));
      model.norm.eps_max = to_vector(nj.at("eps_max"));
      model.norm.sig_min = to_vector(nj.at("sig_min"));
      model.norm.sig_max = to_vector(nj.at("sig_max"));
    }
    const auto rows = doc.at("k_fix").get<std::vector<std::vector<double>>>();
    DenseMatrix k(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows.size(); ++j) k(i, j) = rows[i].at(j);
    }
    model.k_fix = SpdMatrixSmall(k);
    if (2 * model.k_fix.dim() != model.net.width()) {
      throw Error(ErrorKind::DimensionMismatch, "k_fix does not match network width");
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed embedding file: ") + e.what());
  }
}

EmbeddingModel load_embedding(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return load_embedding(in);
}

}  // namespace ddmech
