#include "elastic/errors.hpp"
#include "elastic/gradnet.hpp"

#include <cmath>

namespace elastic::gradnet {

namespace {

// log(1 + e^x) without overflow.
double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

// Reduce a full-shape gradient back to the operand's shape.
Matrix reduce_to(const Matrix& g, const Matrix& operand) {
  if (is_scalar(operand) && !is_scalar(g)) return Matrix::Constant(1, 1, g.sum());
  return g;
}

enum BinaryOp { kAdd, kSub, kMul, kMin };

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.owner != this || v.id >= nodes_.size()) throw ContractViolation("Tape: handle does not belong to this tape");
  return nodes_[v.id];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_) throw ContractViolation("Tape::grad before backward()");
  return n.grad;
}

std::vector<double> Tape::param_grad(const DenseNet& net) const {
  auto it = param_grads_.find(&net);
  if (it == param_grads_.end()) return std::vector<double>(net.parameter_count(), 0.0);
  return it->second;
}

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> backprop) {
  if (backward_done_) throw ContractViolation("Tape: cannot record after backward()");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1, this};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Var Tape::leaf(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Var Tape::scalar(double v, bool requires_grad) { return leaf(Matrix::Constant(1, 1, v), requires_grad); }

Var Tape::affine(Var x, const DenseNet& net, std::size_t layer, bool trainable) {
  const Matrix& xv = node(x).value;
  const LayerShape& l = net.layers().at(layer);
  if (static_cast<std::size_t>(xv.cols()) != l.fan_in) throw ContractViolation("Tape::affine: width mismatch");
  const double* base = net.weights().data() + net.layer_offset(layer);
  Eigen::Map<const RowMatrix> w(base, l.fan_out, l.fan_in);
  Eigen::Map<const Vector> b(base + l.fan_in * l.fan_out, l.fan_out);
  Matrix out = xv * w.transpose();
  out.rowwise() += b.transpose();

  if (trainable) param_grads_.try_emplace(&net, net.parameter_count(), 0.0);
  const bool need = trainable || needs(x);
  const std::size_t xin = x.id;
  const DenseNet* netp = &net;
  return push(std::move(out), need, [xin, netp, layer, trainable](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const LayerShape& ls = netp->layers()[layer];
    const double* wbase = netp->weights().data() + netp->layer_offset(layer);
    Eigen::Map<const RowMatrix> wm(wbase, ls.fan_out, ls.fan_in);
    if (t.nodes_[xin].needs_grad) t.accumulate(xin, g * wm);
    if (trainable) {
      auto& pg = t.param_grads_.at(netp);
      double* gbase = pg.data() + netp->layer_offset(layer);
      Eigen::Map<RowMatrix> gw(gbase, ls.fan_out, ls.fan_in);
      Eigen::Map<Vector> gb(gbase + ls.fan_in * ls.fan_out, ls.fan_out);
      gw.noalias() += g.transpose() * t.nodes_[xin].value;
      gb += g.colwise().sum().transpose();
    }
  });
}

Var Tape::activate(Var x, Activation a) {
  switch (a) {
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Identity: return x;
  }
  return x;
}

Var Tape::tanh(Var x) {
  Matrix out = node(x).value.array().tanh().matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value;
    t.accumulate(xin, (t.nodes_[self].grad.array() * (1.0 - y.array().square())).matrix());
  });
}

Var Tape::relu(Var x) {
  Matrix out = node(x).value.array().max(0.0).matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    const Matrix& xv = t.nodes_[xin].value;
    t.accumulate(xin, (t.nodes_[self].grad.array() * (xv.array() > 0.0).cast<double>()).matrix());
  });
}

Var Tape::exp(Var x) {
  Matrix out = node(x).value.array().exp().matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    t.accumulate(xin, (t.nodes_[self].grad.array() * t.nodes_[self].value.array()).matrix());
  });
}

Var Tape::log(Var x) {
  Matrix out = node(x).value.array().log().matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    t.accumulate(xin, (t.nodes_[self].grad.array() / t.nodes_[xin].value.array()).matrix());
  });
}

Var Tape::square(Var x) {
  Matrix out = node(x).value.array().square().matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    t.accumulate(xin, (2.0 * t.nodes_[self].grad.array() * t.nodes_[xin].value.array()).matrix());
  });
}

Var Tape::softplus(Var x) {
  Matrix out = node(x).value.unaryExpr([](double v) { return softplus_scalar(v); });
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    Matrix s = t.nodes_[xin].value.unaryExpr([](double v) { return sigmoid(v); });
    t.accumulate(xin, (t.nodes_[self].grad.array() * s.array()).matrix());
  });
}

Var Tape::scale(Var x, double c) {
  Matrix out = node(x).value * c;
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin, c](Tape& t, std::size_t self) {
    t.accumulate(xin, t.nodes_[self].grad * c);
  });
}

Var Tape::add_scalar(Var x, double c) {
  Matrix out = (node(x).value.array() + c).matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    t.accumulate(xin, t.nodes_[self].grad);
  });
}

Var Tape::clamp(Var x, double lo, double hi) {
  Matrix out = node(x).value.array().max(lo).min(hi).matrix();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin, lo, hi](Tape& t, std::size_t self) {
    const auto& xv = t.nodes_[xin].value.array();
    t.accumulate(xin, (t.nodes_[self].grad.array() * ((xv >= lo) && (xv <= hi)).cast<double>()).matrix());
  });
}

Var Tape::broadcast_binary(Var a, Var b, int op) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  if (!same && !is_scalar(av) && !is_scalar(bv))
    throw ContractViolation("Tape: operand shapes " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) +
                            " and " + std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()) + " do not broadcast");
  const Eigen::Index rows = std::max(av.rows(), bv.rows());
  const Eigen::Index cols = std::max(av.cols(), bv.cols());
  const Matrix ae = expand(av, rows, cols);
  const Matrix be = expand(bv, rows, cols);
  Matrix out;
  switch (op) {
    case kAdd: out = ae + be; break;
    case kSub: out = ae - be; break;
    case kMul: out = (ae.array() * be.array()).matrix(); break;
    case kMin: out = ae.array().min(be.array()).matrix(); break;
  }
  const std::size_t ai = a.id;
  const std::size_t bi = b.id;
  return push(std::move(out), needs(a) || needs(b), [ai, bi, op, rows, cols](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av2 = t.nodes_[ai].value;
    const Matrix& bv2 = t.nodes_[bi].value;
    Matrix ga;
    Matrix gb;
    switch (op) {
      case kAdd: ga = g; gb = g; break;
      case kSub: ga = g; gb = -g; break;
      case kMul:
        ga = (g.array() * expand(bv2, rows, cols).array()).matrix();
        gb = (g.array() * expand(av2, rows, cols).array()).matrix();
        break;
      case kMin: {
        // Ties route the gradient to the first operand.
        const Matrix ae2 = expand(av2, rows, cols);
        const Matrix be2 = expand(bv2, rows, cols);
        const auto pick_a = (ae2.array() <= be2.array()).cast<double>();
        ga = (g.array() * pick_a).matrix();
        gb = (g.array() * (1.0 - pick_a)).matrix();
        break;
      }
    }
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, reduce_to(ga, av2));
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, reduce_to(gb, bv2));
  });
}

Var Tape::add(Var a, Var b) { return broadcast_binary(a, b, kAdd); }
Var Tape::sub(Var a, Var b) { return broadcast_binary(a, b, kSub); }
Var Tape::mul(Var a, Var b) { return broadcast_binary(a, b, kMul); }
Var Tape::min(Var a, Var b) { return broadcast_binary(a, b, kMin); }

Var Tape::mean(Var x) {
  const Matrix& xv = node(x).value;
  if (xv.size() == 0) throw ContractViolation("Tape::mean of empty value");
  const double n = static_cast<double>(xv.size());
  Matrix out = Matrix::Constant(1, 1, xv.sum() / n);
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin, n](Tape& t, std::size_t self) {
    const Matrix& xv2 = t.nodes_[xin].value;
    t.accumulate(xin, Matrix::Constant(xv2.rows(), xv2.cols(), t.nodes_[self].grad(0, 0) / n));
  });
}

Var Tape::sum_cols(Var x) {
  Matrix out = node(x).value.rowwise().sum();
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin](Tape& t, std::size_t self) {
    const Eigen::Index cols = t.nodes_[xin].value.cols();
    t.accumulate(xin, t.nodes_[self].grad.replicate(1, cols));
  });
}

Var Tape::slice_cols(Var x, std::size_t start, std::size_t count) {
  const Matrix& xv = node(x).value;
  if (start + count > static_cast<std::size_t>(xv.cols())) throw ContractViolation("Tape::slice_cols out of range");
  Matrix out = xv.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  const std::size_t xin = x.id;
  return push(std::move(out), needs(x), [xin, start, count](Tape& t, std::size_t self) {
    const Matrix& xv2 = t.nodes_[xin].value;
    Matrix g = Matrix::Zero(xv2.rows(), xv2.cols());
    g.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) = t.nodes_[self].grad;
    t.accumulate(xin, g);
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.rows() != bv.rows()) throw ContractViolation("Tape::concat_cols row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const std::size_t ai = a.id;
  const std::size_t bi = b.id;
  const Eigen::Index ac = av.cols();
  const Eigen::Index bc = bv.cols();
  return push(std::move(out), needs(a) || needs(b), [ai, bi, ac, bc](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[ai].needs_grad) t.accumulate(ai, g.leftCols(ac));
    if (t.nodes_[bi].needs_grad) t.accumulate(bi, g.rightCols(bc));
  });
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw ContractViolation("Tape::backward on an empty tape");
  if (backward_done_) throw ContractViolation("Tape::backward called twice on the same recording");
  const Node& ln = node(loss);
  if (!is_scalar(ln.value)) throw ContractViolation("Tape::backward: loss must be 1x1");
  for (auto& [net, g] : param_grads_) std::fill(g.begin(), g.end(), 0.0);
  for (auto& n : nodes_) n.grad.resize(0, 0);
  backward_done_ = true;
  if (!ln.needs_grad) return;
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backprop) n.backprop(*this, i);
  }
  // Nodes that received no gradient report zeros of their own shape.
  for (auto& n : nodes_)
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
}

}  // namespace elastic::gradnet
