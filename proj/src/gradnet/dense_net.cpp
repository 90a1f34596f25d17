#include "elastic/errors.hpp"
#include "elastic/gradnet.hpp"

#include <cmath>

namespace elastic::gradnet {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& tag) {
  if (tag == "tanh") return Activation::Tanh;
  if (tag == "relu") return Activation::Relu;
  if (tag == "identity") return Activation::Identity;
  throw FormatError("unknown activation tag '" + tag + "'");
}

DenseNet::DenseNet(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ContractViolation("DenseNet needs at least one layer");
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.fan_in == 0 || l.fan_out == 0) throw ContractViolation("DenseNet layer with zero width");
    if (i > 0 && layers_[i - 1].fan_out != l.fan_in)
      throw ContractViolation("DenseNet layer widths do not chain");
    offsets_.push_back(total);
    total += (l.fan_in + 1) * l.fan_out;
  }
  weights_.assign(total, 0.0);
}

DenseNet DenseNet::mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                       std::size_t output_dim, Activation hidden_activation, Rng& rng,
                       double final_bound) {
  std::vector<LayerShape> shapes;
  std::size_t prev = input_dim;
  for (std::size_t h : hidden) {
    shapes.push_back({prev, h, hidden_activation});
    prev = h;
  }
  shapes.push_back({prev, output_dim, Activation::Identity});
  DenseNet net(std::move(shapes));
  for (std::size_t i = 0; i < net.layers_.size(); ++i) {
    const auto& l = net.layers_[i];
    double bound = 1.0 / std::sqrt(static_cast<double>(l.fan_in));
    if (i + 1 == net.layers_.size() && final_bound > 0.0) bound = final_bound;
    const std::size_t n = (l.fan_in + 1) * l.fan_out;
    for (std::size_t k = 0; k < n; ++k) net.weights_[net.offsets_[i] + k] = rng.uniform(-bound, bound);
  }
  return net;
}

std::size_t DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().fan_in; }
std::size_t DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().fan_out; }

namespace {

void apply_activation(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Tanh: m = m.array().tanh().matrix(); break;
    case Activation::Relu: m = m.array().max(0.0).matrix(); break;
    case Activation::Identity: break;
  }
}

}  // namespace

Matrix DenseNet::forward_batch(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim())
    throw ContractViolation("DenseNet::forward: input has " + std::to_string(x.cols()) +
                            " columns, expected " + std::to_string(input_dim()));
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Eigen::Map<const RowMatrix> w(weights_.data() + offsets_[i], l.fan_out, l.fan_in);
    Eigen::Map<const Vector> b(weights_.data() + offsets_[i] + l.fan_in * l.fan_out, l.fan_out);
    Matrix next = h * w.transpose();
    next.rowwise() += b.transpose();
    apply_activation(next, l.activation);
    h = std::move(next);
  }
  return h;
}

Vector DenseNet::forward(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw ContractViolation("DenseNet::forward: input length " + std::to_string(x.size()) +
                            ", expected " + std::to_string(input_dim()));
  Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  return forward_batch(row).row(0).transpose();
}

Var DenseNet::forward(Tape& tape, Var x, bool trainable) const {
  if (static_cast<std::size_t>(tape.value(x).cols()) != input_dim())
    throw ContractViolation("DenseNet::forward: tape input width mismatch");
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = tape.affine(h, *this, i, trainable);
    h = tape.activate(h, layers_[i].activation);
  }
  return h;
}

void soft_update(DenseNet& target, const DenseNet& online, double tau) {
  if (target.layers() != online.layers()) throw ContractViolation("soft_update: shape mismatch");
  if (!(tau > 0.0 && tau <= 1.0)) throw ContractViolation("soft_update: tau must lie in (0, 1]");
  auto t = target.weights();
  auto o = online.weights();
  if (tau == 1.0) {
    std::copy(o.begin(), o.end(), t.begin());
    return;
  }
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
}

}  // namespace elastic::gradnet
