#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/autodiff.hpp"
#include "legend/rng.hpp"

// Network containers on top of the tape engine: MLPs, an LSTM-cell RNN,
// and Adam. Parameters live as flat double vectors; each training
// iteration binds them onto a fresh tape as leaves.
namespace legend::nn {

using ad::NodeRef;
using ad::Tape;

enum class Act : std::uint8_t { linear, relu, tanh, sigmoid, softplus };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::linear: return "linear";
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
    case Act::sigmoid: return "sigmoid";
    case Act::softplus: return "softplus";
  }
  return "?";
}

inline Act act_from_name(const std::string& s) {
  if (s == "linear") return Act::linear;
  if (s == "relu") return Act::relu;
  if (s == "tanh") return Act::tanh;
  if (s == "sigmoid") return Act::sigmoid;
  if (s == "softplus") return Act::softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

inline double apply_act(Act a, double v) {
  switch (a) {
    case Act::linear: return v;
    case Act::relu: return v > 0.0 ? v : 0.0;
    case Act::tanh: return std::tanh(v);
    case Act::sigmoid:
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
    case Act::softplus:
      return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return v;
}

inline NodeRef apply_act(Act a, Tape& t, NodeRef v) {
  switch (a) {
    case Act::linear: return v;
    case Act::relu: return t.relu(v);
    case Act::tanh: return t.tanh(v);
    case Act::sigmoid: return t.sigmoid(v);
    case Act::softplus: return t.softplus(v);
  }
  return v;
}

// Feed-forward net. Layer l maps sizes[l] -> sizes[l+1]; hidden layers use
// `hidden_act`, the final layer is linear. Parameter layout per layer:
// W row-major then b.
struct Network {
  std::vector<int> sizes;
  std::vector<Act> acts;  // one per layer
  std::vector<double> params;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int num_layers() const { return static_cast<int>(sizes.size()) - 1; }

  std::size_t layer_offset(int l) const {
    std::size_t off = 0;
    for (int k = 0; k < l; ++k)
      off += static_cast<std::size_t>(sizes[k + 1]) * sizes[k] + sizes[k + 1];
    return off;
  }
};

inline Network mlp_new(std::span<const int> layer_sizes, Act hidden_act,
                       std::uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("mlp_new: need at least 2 layer sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("mlp_new: nonpositive layer size");
  Network net;
  net.sizes.assign(layer_sizes.begin(), layer_sizes.end());
  for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
    net.acts.push_back(l + 2 == static_cast<int>(layer_sizes.size())
                           ? Act::linear
                           : hidden_act);
  rng::Stream rs(seed, 0x6d6c70 /* "mlp" */);
  for (int l = 0; l < net.num_layers(); ++l) {
    const int fan_in = net.sizes[l], fan_out = net.sizes[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);  // He-uniform, var 2/fan_in
    for (int i = 0; i < fan_out * fan_in; ++i)
      net.params.push_back(rs.uniform(-limit, limit));
    for (int i = 0; i < fan_out; ++i) net.params.push_back(0.0);
  }
  return net;
}

// Network parameters recorded as tape leaves.
struct BoundNet {
  const Network* net = nullptr;
  std::vector<NodeRef> p;
};

inline BoundNet bind(const Network& net, Tape& t) {
  BoundNet b;
  b.net = &net;
  b.p.reserve(net.params.size());
  for (double v : net.params) b.p.push_back(t.leaf(v));
  return b;
}

inline std::vector<NodeRef> mlp_forward(const BoundNet& b,
                                        std::span<const NodeRef> x, Tape& t) {
  const Network& net = *b.net;
  if (static_cast<int>(x.size()) != net.input_dim())
    throw std::invalid_argument("mlp_forward: input dim mismatch");
  std::vector<NodeRef> cur(x.begin(), x.end());
  std::size_t off = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int in = net.sizes[l], out = net.sizes[l + 1];
    std::vector<NodeRef> next(out);
    for (int i = 0; i < out; ++i) {
      std::span<const NodeRef> wrow(b.p.data() + off + i * in, in);
      NodeRef z = t.add(t.dot(wrow, cur),
                        b.p[off + static_cast<std::size_t>(out) * in + i]);
      next[i] = apply_act(net.acts[l], t, z);
    }
    off += static_cast<std::size_t>(out) * in + out;
    cur = std::move(next);
  }
  return cur;
}

// Plain double forward pass (simulation / data paths, no tape).
inline void mlp_eval(const Network& net, const double* x, double* y) {
  thread_local std::vector<double> buf0, buf1;
  buf0.assign(x, x + net.input_dim());
  std::size_t off = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const int in = net.sizes[l], out = net.sizes[l + 1];
    buf1.resize(out);
    for (int i = 0; i < out; ++i) {
      double acc = net.params[off + static_cast<std::size_t>(out) * in + i];
      for (int j = 0; j < in; ++j)
        acc += net.params[off + static_cast<std::size_t>(i) * in + j] * buf0[j];
      buf1[i] = apply_act(net.acts[l], acc);
    }
    off += static_cast<std::size_t>(out) * in + out;
    std::swap(buf0, buf1);
  }
  for (int i = 0; i < net.output_dim(); ++i) y[i] = buf0[i];
}

// LSTM cell with a linear output projection. For each gate g in
// {input, forget, output, candidate}: W_g [h x in], U_g [h x h], b_g [h];
// then C [out x h] and d [out].
struct RecurrentNetwork {
  int in_dim = 0, hidden = 0, out_dim = 0;
  std::vector<double> params;

  std::size_t gate_stride() const {
    return static_cast<std::size_t>(hidden) * in_dim +
           static_cast<std::size_t>(hidden) * hidden + hidden;
  }
  std::size_t proj_offset() const { return 4 * gate_stride(); }
  std::size_t param_count() const {
    return proj_offset() + static_cast<std::size_t>(out_dim) * hidden + out_dim;
  }
};

inline RecurrentNetwork lstm_new(int in_dim, int hidden, int out_dim,
                                 std::uint64_t seed) {
  if (in_dim <= 0 || hidden <= 0 || out_dim <= 0)
    throw std::invalid_argument("lstm_new: nonpositive dimension");
  RecurrentNetwork r;
  r.in_dim = in_dim;
  r.hidden = hidden;
  r.out_dim = out_dim;
  r.params.reserve(r.param_count());
  rng::Stream rs(seed, 0x6c73746d /* "lstm" */);
  for (int g = 0; g < 4; ++g) {
    const double lw = std::sqrt(6.0 / in_dim), lu = std::sqrt(6.0 / hidden);
    for (int i = 0; i < hidden * in_dim; ++i)
      r.params.push_back(rs.uniform(-lw, lw));
    for (int i = 0; i < hidden * hidden; ++i)
      r.params.push_back(rs.uniform(-lu, lu));
    // forget-gate bias 1 keeps early gradients alive
    for (int i = 0; i < hidden; ++i) r.params.push_back(g == 1 ? 1.0 : 0.0);
  }
  const double lc = std::sqrt(6.0 / hidden);
  for (int i = 0; i < out_dim * hidden; ++i)
    r.params.push_back(rs.uniform(-lc, lc));
  for (int i = 0; i < out_dim; ++i) r.params.push_back(0.0);
  return r;
}

struct BoundRnn {
  const RecurrentNetwork* net = nullptr;
  std::vector<NodeRef> p;
};

inline BoundRnn bind(const RecurrentNetwork& net, Tape& t) {
  BoundRnn b;
  b.net = &net;
  b.p.reserve(net.params.size());
  for (double v : net.params) b.p.push_back(t.leaf(v));
  return b;
}

// Standard LSTM recursion from zero initial state; returns the projected
// output pi_t for every step. pi_t depends only on inputs 0..t.
inline std::vector<std::vector<NodeRef>> rnn_forward(
    const BoundRnn& b, std::span<const std::vector<NodeRef>> sequence,
    Tape& t) {
  const RecurrentNetwork& net = *b.net;
  if (sequence.empty())
    throw std::invalid_argument("rnn_forward: empty sequence");
  const int H = net.hidden, I = net.in_dim, O = net.out_dim;
  const std::size_t gs = net.gate_stride();

  std::vector<NodeRef> h(H, t.constant(0.0)), c(H, t.constant(0.0));
  std::vector<std::vector<NodeRef>> outs;
  outs.reserve(sequence.size());

  for (const auto& x : sequence) {
    if (static_cast<int>(x.size()) != I)
      throw std::invalid_argument("rnn_forward: input dim mismatch");
    std::vector<NodeRef> gates[4];
    for (int g = 0; g < 4; ++g) {
      gates[g].resize(H);
      const std::size_t off = g * gs;
      for (int i = 0; i < H; ++i) {
        std::span<const NodeRef> wrow(b.p.data() + off + i * I, I);
        std::span<const NodeRef> urow(
            b.p.data() + off + static_cast<std::size_t>(H) * I + i * H, H);
        NodeRef z = t.add(
            t.add(t.dot(wrow, x), t.dot(urow, h)),
            b.p[off + static_cast<std::size_t>(H) * I +
                static_cast<std::size_t>(H) * H + i]);
        gates[g][i] = g == 3 ? t.tanh(z) : t.sigmoid(z);
      }
    }
    for (int i = 0; i < H; ++i) {
      c[i] = t.add(t.mul(gates[1][i], c[i]), t.mul(gates[0][i], gates[3][i]));
      h[i] = t.mul(gates[2][i], t.tanh(c[i]));
    }
    std::vector<NodeRef> pi(O);
    const std::size_t po = net.proj_offset();
    for (int i = 0; i < O; ++i) {
      std::span<const NodeRef> crow(b.p.data() + po + i * H, H);
      pi[i] = t.add(t.dot(crow, h),
                    b.p[po + static_cast<std::size_t>(O) * H + i]);
    }
    outs.push_back(std::move(pi));
  }
  return outs;
}

// Plain double LSTM forward; writes pi_t rows into `out` (steps x out_dim).
inline void rnn_eval(const RecurrentNetwork& net,
                     const std::vector<std::vector<double>>& sequence,
                     std::vector<std::vector<double>>& out) {
  const int H = net.hidden, I = net.in_dim, O = net.out_dim;
  const std::size_t gs = net.gate_stride();
  std::vector<double> h(H, 0.0), c(H, 0.0), gate(4);
  out.assign(sequence.size(), std::vector<double>(O));
  for (std::size_t s = 0; s < sequence.size(); ++s) {
    const auto& x = sequence[s];
    std::vector<double> newc(H), newh(H);
    for (int i = 0; i < H; ++i) {
      for (int g = 0; g < 4; ++g) {
        const std::size_t off = g * gs;
        double z = net.params[off + static_cast<std::size_t>(H) * I +
                              static_cast<std::size_t>(H) * H + i];
        for (int j = 0; j < I; ++j)
          z += net.params[off + static_cast<std::size_t>(i) * I + j] * x[j];
        for (int j = 0; j < H; ++j)
          z += net.params[off + static_cast<std::size_t>(H) * I +
                          static_cast<std::size_t>(i) * H + j] *
               h[j];
        gate[g] = g == 3 ? std::tanh(z) : apply_act(Act::sigmoid, z);
      }
      newc[i] = gate[1] * c[i] + gate[0] * gate[3];
      newh[i] = gate[2] * std::tanh(newc[i]);
    }
    h = newh;
    c = newc;
    const std::size_t po = net.proj_offset();
    for (int i = 0; i < O; ++i) {
      double z = net.params[po + static_cast<std::size_t>(O) * H + i];
      for (int j = 0; j < H; ++j)
        z += net.params[po + static_cast<std::size_t>(i) * H + j] * h[j];
      out[s][i] = z;
    }
  }
}

// ---- Adam ----

struct AdamState {
  double lr = 1e-4, beta1 = 0.5, beta2 = 0.9, eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m, v;
};

inline void adam_step(std::vector<double>& params,
                      std::span<const double> grads, AdamState& st) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam_step: state shape mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    params[i] -= st.lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + st.eps);
  }
}

}  // namespace legend::nn
