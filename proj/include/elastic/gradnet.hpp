#pragma once

// Dense networks, a reverse-mode tape over batched matrices, and an
// adaptive-moment optimizer. Batches are rows; features are columns.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "elastic/rng.hpp"

namespace elastic::gradnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Tanh, Relu, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& tag);

struct LayerShape {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Activation activation = Activation::Identity;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  const Tape* owner = nullptr;
};

/// Fully connected network. Each layer stores a row-major (fan_out x fan_in)
/// weight block followed by fan_out biases, layers packed back to back.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<LayerShape> layers);

  /// Multilayer perceptron with fan-in scaled uniform initialization. A
  /// positive `final_bound` overrides the bound of the last layer.
  static DenseNet mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                      std::size_t output_dim, Activation hidden_activation, Rng& rng,
                      double final_bound = 0.0);

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const { return weights_.size(); }
  std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  Vector forward(std::span<const double> x) const;
  Matrix forward_batch(const Matrix& x) const;

  /// Records the forward pass on `tape`. With `trainable`, parameter
  /// gradients are accumulated into the tape's buffer for this network.
  Var forward(Tape& tape, Var x, bool trainable) const;

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> weights_;
};

/// target <- (1 - tau) * target + tau * online, elementwise.
void soft_update(DenseNet& target, const DenseNet& online, double tau);

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// index order is a valid reverse topological order.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v, bool requires_grad = false);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() loss with respect to `v`.
  const Matrix& grad(Var v) const;
  /// Accumulated parameter gradient for `net`, zeros if it was not trainable.
  std::vector<double> param_grad(const DenseNet& net) const;

  Var affine(Var x, const DenseNet& net, std::size_t layer, bool trainable);
  Var activate(Var x, Activation a);
  Var tanh(Var x);
  Var relu(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var square(Var x);
  Var softplus(Var x);
  Var neg(Var x) { return scale(x, -1.0); }
  Var scale(Var x, double c);
  Var add_scalar(Var x, double c);
  Var clamp(Var x, double lo, double hi);

  // Binary ops; either side may be 1x1 and is then broadcast.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var min(Var a, Var b);

  Var mean(Var x);
  Var sum_cols(Var x);
  Var slice_cols(Var x, std::size_t start, std::size_t count);
  Var concat_cols(Var a, Var b);

  void backward(Var loss);
  bool has_backward() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  const Node& node(Var v) const;
  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> backprop);
  void accumulate(std::size_t id, const Matrix& g);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Var broadcast_binary(Var a, Var b, int op);

  std::vector<Node> nodes_;
  std::unordered_map<const DenseNet*, std::vector<double>> param_grads_;
  bool backward_done_ = false;
};

/// Learning-rate schedule. The diminishing form base/(1 + k/k_decay)
/// satisfies the Robbins-Monro conditions.
struct Schedule {
  enum class Kind { Constant, Diminishing };
  Kind kind = Kind::Constant;
  double base_rate = 3e-4;
  double k_decay = 1e4;

  double rate_at(std::uint64_t step) const;
};

/// Adam moments and step counter for one parameter vector.
struct OptimState {
  explicit OptimState(std::size_t n = 0, Schedule s = {}) : m(n, 0.0), v(n, 0.0), schedule(s) {}

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  Schedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step in place. Throws TrainingDiverged on a non-finite gradient.
void opt_step(OptimState& state, std::span<double> params, std::span<const double> grads);

double l2_norm(std::span<const double> v);

// Checkpoint container: text header then raw little-endian doubles.
inline constexpr const char* kCheckpointMagic = "ELASTIC-CKPT-1";

void save_net(std::ostream& os, const DenseNet& net);
DenseNet load_net(std::istream& is);
void save_net(const std::string& path, const DenseNet& net);
DenseNet load_net(const std::string& path);

void save_optim(std::ostream& os, const OptimState& s);
OptimState load_optim(std::istream& is);

}  // namespace elastic::gradnet
