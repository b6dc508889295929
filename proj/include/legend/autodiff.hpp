#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Tape-based reverse-mode differentiation over scalar nodes.
//
// Two backward passes are provided:
//   backward()       -- plain double adjoints, fast, not differentiable.
//   backward_nodes() -- the adjoint computation is itself recorded on the
//                       tape, so a scalar built from gradient nodes can be
//                       differentiated again (needed for the critic
//                       gradient penalty).
//
// Nonsmooth primitives (relu, abs) use the subgradient convention
// relu'(0) = 0, |x|'(0) = 0; their taped derivative is a constant factor,
// so their second derivative is 0 everywhere.
namespace legend::ad {

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  abs,
  relu,
  sigmoid,
  tanh,
  sqrt,
  pow_const,
  softplus,
  sum,
  dot,
};

struct NodeRef {
  std::uint32_t idx = 0;
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

class Tape {
 public:
  std::size_t size() const { return op_.size(); }

  void clear() {
    op_.clear();
    a_.clear();
    b_.clear();
    val_.clear();
    aux_.clear();
    args_.clear();
  }

  void reserve(std::size_t n) {
    op_.reserve(n);
    a_.reserve(n);
    b_.reserve(n);
    val_.reserve(n);
    aux_.reserve(n);
  }

  double value(NodeRef r) const { return val_[r.idx]; }
  Op op(NodeRef r) const { return static_cast<Op>(op_[r.idx]); }

  NodeRef leaf(double v) { return push(Op::leaf, 0, 0, v); }
  NodeRef constant(double v) { return push(Op::constant, 0, 0, v); }

  NodeRef add(NodeRef x, NodeRef y) {
    return push(Op::add, x.idx, y.idx, val_[x.idx] + val_[y.idx]);
  }
  NodeRef sub(NodeRef x, NodeRef y) {
    return push(Op::sub, x.idx, y.idx, val_[x.idx] - val_[y.idx]);
  }
  NodeRef mul(NodeRef x, NodeRef y) {
    return push(Op::mul, x.idx, y.idx, val_[x.idx] * val_[y.idx]);
  }
  NodeRef div(NodeRef x, NodeRef y) {
    if (val_[y.idx] == 0.0) throw EvalError("div: division by zero");
    return push(Op::div, x.idx, y.idx, val_[x.idx] / val_[y.idx]);
  }
  NodeRef neg(NodeRef x) { return push(Op::neg, x.idx, 0, -val_[x.idx]); }
  NodeRef exp(NodeRef x) {
    return push(Op::exp, x.idx, 0, std::exp(val_[x.idx]));
  }
  NodeRef log(NodeRef x) {
    if (!(val_[x.idx] > 0.0)) throw EvalError("log: nonpositive operand");
    return push(Op::log, x.idx, 0, std::log(val_[x.idx]));
  }
  NodeRef abs(NodeRef x) {
    return push(Op::abs, x.idx, 0, std::abs(val_[x.idx]));
  }
  NodeRef relu(NodeRef x) {
    return push(Op::relu, x.idx, 0, val_[x.idx] > 0.0 ? val_[x.idx] : 0.0);
  }
  NodeRef sigmoid(NodeRef x) {
    const double v = val_[x.idx];
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                              : std::exp(v) / (1.0 + std::exp(v));
    return push(Op::sigmoid, x.idx, 0, s);
  }
  NodeRef tanh(NodeRef x) {
    return push(Op::tanh, x.idx, 0, std::tanh(val_[x.idx]));
  }
  NodeRef sqrt(NodeRef x) {
    if (val_[x.idx] < 0.0) throw EvalError("sqrt: negative operand");
    return push(Op::sqrt, x.idx, 0, std::sqrt(val_[x.idx]));
  }
  NodeRef pow_const(NodeRef x, double e) {
    NodeRef r = push(Op::pow_const, x.idx, 0, std::pow(val_[x.idx], e));
    aux_.back() = e;
    return r;
  }
  NodeRef softplus(NodeRef x) {
    const double v = val_[x.idx];
    const double s = v > 0.0 ? v + std::log1p(std::exp(-v))
                             : std::log1p(std::exp(v));
    return push(Op::softplus, x.idx, 0, s);
  }

  NodeRef sum(std::span<const NodeRef> xs) {
    double acc = 0.0;
    const std::uint32_t off = static_cast<std::uint32_t>(args_.size());
    for (NodeRef x : xs) {
      args_.push_back(x.idx);
      acc += val_[x.idx];
    }
    return push(Op::sum, off, static_cast<std::uint32_t>(xs.size()), acc);
  }

  NodeRef dot(std::span<const NodeRef> xs, std::span<const NodeRef> ys) {
    if (xs.size() != ys.size()) throw EvalError("dot: length mismatch");
    double acc = 0.0;
    const std::uint32_t off = static_cast<std::uint32_t>(args_.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      args_.push_back(xs[i].idx);
      acc += val_[xs[i].idx] * val_[ys[i].idx];
    }
    for (std::size_t i = 0; i < ys.size(); ++i) args_.push_back(ys[i].idx);
    return push(Op::dot, off, static_cast<std::uint32_t>(xs.size()), acc);
  }

  // Raw accessors used by the backward passes.
  std::uint8_t op_raw(std::uint32_t i) const { return op_[i]; }
  std::uint32_t operand_a(std::uint32_t i) const { return a_[i]; }
  std::uint32_t operand_b(std::uint32_t i) const { return b_[i]; }
  double value_at(std::uint32_t i) const { return val_[i]; }
  double aux_at(std::uint32_t i) const { return aux_[i]; }
  std::uint32_t arg_at(std::uint32_t i) const { return args_[i]; }

 private:
  NodeRef push(Op o, std::uint32_t a, std::uint32_t b, double v) {
    if (!std::isfinite(v))
      throw EvalError("non-finite value from op " +
                      std::to_string(static_cast<int>(o)));
    op_.push_back(static_cast<std::uint8_t>(o));
    a_.push_back(a);
    b_.push_back(b);
    val_.push_back(v);
    aux_.push_back(0.0);
    return NodeRef{static_cast<std::uint32_t>(op_.size() - 1)};
  }

  std::vector<std::uint8_t> op_;
  std::vector<std::uint32_t> a_, b_;
  std::vector<double> val_, aux_;
  std::vector<std::uint32_t> args_;
};

// Generic record() entry point; the named Tape methods are the usual way in.
inline NodeRef record(Tape& t, Op kind, std::span<const NodeRef> operands,
                      double aux = 0.0) {
  switch (kind) {
    case Op::add: return t.add(operands[0], operands[1]);
    case Op::sub: return t.sub(operands[0], operands[1]);
    case Op::mul: return t.mul(operands[0], operands[1]);
    case Op::div: return t.div(operands[0], operands[1]);
    case Op::neg: return t.neg(operands[0]);
    case Op::exp: return t.exp(operands[0]);
    case Op::log: return t.log(operands[0]);
    case Op::abs: return t.abs(operands[0]);
    case Op::relu: return t.relu(operands[0]);
    case Op::sigmoid: return t.sigmoid(operands[0]);
    case Op::tanh: return t.tanh(operands[0]);
    case Op::sqrt: return t.sqrt(operands[0]);
    case Op::softplus: return t.softplus(operands[0]);
    case Op::pow_const: return t.pow_const(operands[0], aux);
    case Op::sum: return t.sum(operands);
    case Op::dot: {
      const std::size_t k = operands.size() / 2;
      return t.dot(operands.subspan(0, k), operands.subspan(k, k));
    }
    default: throw EvalError("record: not a recordable op");
  }
}

struct GradientMap {
  std::vector<NodeRef> leaves;
  std::vector<double> grads;

  double at(NodeRef r) const {
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].idx == r.idx) return grads[i];
    return 0.0;  // absent means zero
  }
};

// Fast reverse sweep with double adjoints. Exact partials of `output`
// with respect to each requested leaf.
inline GradientMap backward(const Tape& t, NodeRef output,
                            std::span<const NodeRef> leaves) {
  std::vector<double> adj(output.idx + 1, 0.0);
  adj[output.idx] = 1.0;
  for (std::uint32_t i = output.idx + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const std::uint32_t a = t.operand_a(i), b = t.operand_b(i);
    switch (static_cast<Op>(t.op_raw(i))) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::add:
        adj[a] += g;
        adj[b] += g;
        break;
      case Op::sub:
        adj[a] += g;
        adj[b] -= g;
        break;
      case Op::mul:
        adj[a] += g * t.value_at(b);
        adj[b] += g * t.value_at(a);
        break;
      case Op::div: {
        const double bv = t.value_at(b);
        adj[a] += g / bv;
        adj[b] -= g * t.value_at(i) / bv;
        break;
      }
      case Op::neg:
        adj[a] -= g;
        break;
      case Op::exp:
        adj[a] += g * t.value_at(i);
        break;
      case Op::log:
        adj[a] += g / t.value_at(a);
        break;
      case Op::abs:
        adj[a] += g * (t.value_at(a) > 0.0   ? 1.0
                       : t.value_at(a) < 0.0 ? -1.0
                                             : 0.0);
        break;
      case Op::relu:
        adj[a] += t.value_at(a) > 0.0 ? g : 0.0;
        break;
      case Op::sigmoid: {
        const double s = t.value_at(i);
        adj[a] += g * s * (1.0 - s);
        break;
      }
      case Op::tanh: {
        const double y = t.value_at(i);
        adj[a] += g * (1.0 - y * y);
        break;
      }
      case Op::sqrt:
        adj[a] += g / (2.0 * t.value_at(i));
        break;
      case Op::pow_const: {
        const double e = t.aux_at(i);
        adj[a] += g * e * std::pow(t.value_at(a), e - 1.0);
        break;
      }
      case Op::softplus: {
        const double v = t.value_at(a);
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
        adj[a] += g * s;
        break;
      }
      case Op::sum:
        for (std::uint32_t k = 0; k < b; ++k) adj[t.arg_at(a + k)] += g;
        break;
      case Op::dot:
        for (std::uint32_t k = 0; k < b; ++k) {
          const std::uint32_t xa = t.arg_at(a + k);
          const std::uint32_t ya = t.arg_at(a + b + k);
          adj[xa] += g * t.value_at(ya);
          adj[ya] += g * t.value_at(xa);
        }
        break;
    }
  }
  GradientMap out;
  out.leaves.assign(leaves.begin(), leaves.end());
  out.grads.reserve(leaves.size());
  for (NodeRef l : leaves)
    out.grads.push_back(l.idx <= output.idx ? adj[l.idx] : 0.0);
  return out;
}

// Reverse sweep that records the adjoint computation as tape nodes, so the
// returned gradient nodes can be differentiated again. Returns one node per
// entry of `wrt` (zero-constant node where the partial vanishes).
inline std::vector<NodeRef> backward_nodes(Tape& t, NodeRef output,
                                           std::span<const NodeRef> wrt) {
  constexpr std::uint32_t kNone = 0xffffffffu;
  std::vector<std::uint32_t> adj(output.idx + 1, kNone);
  const NodeRef one = t.constant(1.0);
  adj[output.idx] = one.idx;

  auto acc = [&](std::uint32_t target, NodeRef contrib) {
    if (target >= adj.size()) return;  // contributions to later nodes impossible
    if (adj[target] == kNone)
      adj[target] = contrib.idx;
    else
      adj[target] = t.add(NodeRef{adj[target]}, contrib).idx;
  };

  for (std::uint32_t i = output.idx + 1; i-- > 0;) {
    if (adj[i] == kNone) continue;
    const NodeRef g{adj[i]};
    const std::uint32_t a = t.operand_a(i), b = t.operand_b(i);
    const NodeRef na{a}, nb{b}, self{i};
    switch (static_cast<Op>(t.op_raw(i))) {
      case Op::leaf:
      case Op::constant:
        break;
      case Op::add:
        acc(a, g);
        acc(b, g);
        break;
      case Op::sub:
        acc(a, g);
        acc(b, t.neg(g));
        break;
      case Op::mul:
        acc(a, t.mul(g, nb));
        acc(b, t.mul(g, na));
        break;
      case Op::div:
        acc(a, t.div(g, nb));
        acc(b, t.neg(t.div(t.mul(g, self), nb)));
        break;
      case Op::neg:
        acc(a, t.neg(g));
        break;
      case Op::exp:
        acc(a, t.mul(g, self));
        break;
      case Op::log:
        acc(a, t.div(g, na));
        break;
      case Op::abs: {
        const double v = t.value_at(a);
        const double s = v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0;
        acc(a, t.mul(g, t.constant(s)));  // second derivative 0 by convention
        break;
      }
      case Op::relu:
        acc(a, t.mul(g, t.constant(t.value_at(a) > 0.0 ? 1.0 : 0.0)));
        break;
      case Op::sigmoid: {
        NodeRef om = t.sub(t.constant(1.0), self);
        acc(a, t.mul(g, t.mul(self, om)));
        break;
      }
      case Op::tanh: {
        NodeRef y2 = t.mul(self, self);
        acc(a, t.mul(g, t.sub(t.constant(1.0), y2)));
        break;
      }
      case Op::sqrt:
        acc(a, t.div(g, t.mul(t.constant(2.0), self)));
        break;
      case Op::pow_const: {
        const double e = t.aux_at(i);
        NodeRef d = t.mul(t.constant(e), t.pow_const(na, e - 1.0));
        acc(a, t.mul(g, d));
        break;
      }
      case Op::softplus:
        acc(a, t.mul(g, t.sigmoid(na)));
        break;
      case Op::sum:
        for (std::uint32_t k = 0; k < b; ++k) acc(t.arg_at(a + k), g);
        break;
      case Op::dot:
        for (std::uint32_t k = 0; k < b; ++k) {
          const std::uint32_t xa = t.arg_at(a + k);
          const std::uint32_t ya = t.arg_at(a + b + k);
          acc(xa, t.mul(g, NodeRef{ya}));
          acc(ya, t.mul(g, NodeRef{xa}));
        }
        break;
    }
  }

  std::vector<NodeRef> out;
  out.reserve(wrt.size());
  for (NodeRef w : wrt) {
    if (w.idx <= output.idx && adj[w.idx] != kNone)
      out.push_back(NodeRef{adj[w.idx]});
    else
      out.push_back(t.constant(0.0));
  }
  return out;
}

// Differentiate a scalar function of the input-gradient of `output` with
// respect to `then_wrt`. `combine` builds the scalar from the gradient
// nodes; the default is their plain sum.
template <typename Combine>
inline GradientMap backward_of_gradient(Tape& t, NodeRef output,
                                        std::span<const NodeRef> wrt_inputs,
                                        std::span<const NodeRef> then_wrt,
                                        Combine combine) {
  std::vector<NodeRef> grad = backward_nodes(t, output, wrt_inputs);
  NodeRef scalar = combine(t, std::span<const NodeRef>(grad));
  return backward(t, scalar, then_wrt);
}

inline GradientMap backward_of_gradient(Tape& t, NodeRef output,
                                        std::span<const NodeRef> wrt_inputs,
                                        std::span<const NodeRef> then_wrt) {
  return backward_of_gradient(
      t, output, wrt_inputs, then_wrt,
      [](Tape& tp, std::span<const NodeRef> g) { return tp.sum(g); });
}

}  // namespace legend::ad
