#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <algorithm>
#include <vector>

#include "legend/autodiff.hpp"
#include "legend/nn.hpp"
#include "legend/rng.hpp"
#include "legend/sde.hpp"

// Everything Wasserstein: exact empirical W1 by min-cost matching, the
// critic-based dual estimate, and Lipschitz enforcement (gradient penalty
// or weight clipping).
namespace legend::ot {

using ad::NodeRef;
using ad::Tape;
using sde::Batch;

// Bijective pairing between two equal-size sample sets.
struct TransportPlan {
  std::vector<int> assignment;  // a[i] matched with b[assignment[i]]
  double cost = 0.0;            // mean matched Euclidean cost
};

// Min-cost assignment on a square cost matrix (Jonker-Volgenant style
// shortest augmenting paths with potentials). Exact for our sizes.
inline std::vector<int> min_cost_assignment(const std::vector<double>& cost,
                                            int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  return assignment;
}

inline double euclid(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

// Exact empirical W1 between equal-size batches under Euclidean ground cost.
inline std::pair<double, TransportPlan> w1_exact(const Batch& a,
                                                 const Batch& b) {
  if (a.count != b.count)
    throw std::invalid_argument(
        "w1_exact: batch sizes differ; subsample to equal sizes first");
  if (a.dim != b.dim) throw std::invalid_argument("w1_exact: dim mismatch");
  const int n = static_cast<int>(a.count);
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<std::size_t>(i) * n + j] =
          euclid(a.row(i), b.row(j), a.dim);
  TransportPlan plan;
  plan.assignment = min_cost_assignment(cost, n);
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    total += cost[static_cast<std::size_t>(i) * n + plan.assignment[i]];
  plan.cost = total / n;
  return {plan.cost, plan};
}

// Mean over coordinates of the exact 1-D empirical W1 (sorted quantile
// coupling). The joint empirical W1 in d >= 2 has a sampling floor decaying
// only as n^(-1/4), which swamps small model errors at desk-scale bag sizes;
// the per-coordinate floor decays as n^(-1/2). Used for scoring predictions
// against held-out bags.
inline double w1_marginal_mean(const Batch& a, const Batch& b) {
  if (a.count != b.count)
    throw std::invalid_argument(
        "w1_marginal_mean: batch sizes differ; subsample to equal sizes "
        "first");
  if (a.dim != b.dim)
    throw std::invalid_argument("w1_marginal_mean: dim mismatch");
  const std::size_t n = a.count;
  std::vector<double> xa(n), xb(n);
  double total = 0.0;
  for (int j = 0; j < a.dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      xa[i] = a.row(i)[j];
      xb[i] = b.row(i)[j];
    }
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(xa[i] - xb[i]);
    total += s / static_cast<double>(n);
  }
  return total / a.dim;
}

// ---- critic machinery ----

struct GradientPenalty {
  double lambda = 10.0;
};
struct WeightClip {
  double c = 0.01;
};

struct LipschitzMode {
  enum class Kind { gradient_penalty, weight_clip } kind =
      Kind::gradient_penalty;
  double lambda_gp = 10.0;
  double clip_c = 0.01;
  // One-sided penalty max(0, ||grad|| - 1)^2. The two-sided form traps an
  // inverted critic: flipping its slope must cross ||grad|| = 0, which the
  // penalty prices at lambda per sample, so the critic stays inverted and
  // the generator diverges. One-sided leaves slopes below 1 free.
  bool one_sided = true;
  // Number of interpolates the penalty is estimated on per update
  // (0 = the full batch). The penalty is an expectation, so a sub-batch is
  // just a noisier estimate; second-order tape work dominates critic cost.
  int gp_interpolates = 0;
};

// One critic per observed timestep plus the enforcement configuration.
struct CriticBank {
  std::vector<nn::Network> critics;
  std::vector<nn::AdamState> adam;
  LipschitzMode mode;
  int critic_steps_per_gen = 5;

  static CriticBank make(int count, int input_dim, int width, int layers,
                         std::uint64_t seed, const LipschitzMode& mode,
                         double lr, double beta1, double beta2) {
    CriticBank bank;
    bank.mode = mode;
    const nn::Act act = mode.kind == LipschitzMode::Kind::gradient_penalty
                            ? nn::Act::softplus
                            : nn::Act::relu;
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    for (int l = 0; l < layers - 1; ++l) sizes.push_back(width);
    sizes.push_back(1);
    for (int t = 0; t < count; ++t) {
      bank.critics.push_back(
          nn::mlp_new(sizes, act, rng::mix64(seed ^ (0xC0FFEEull + t))));
      nn::AdamState st;
      st.lr = lr;
      st.beta1 = beta1;
      st.beta2 = beta2;
      bank.adam.push_back(st);
    }
    return bank;
  }
};

inline std::vector<NodeRef> record_const_row(Tape& t, const double* x,
                                             int dim) {
  std::vector<NodeRef> out(dim);
  for (int j = 0; j < dim; ++j) out[j] = t.constant(x[j]);
  return out;
}

// mean_i D(x_i) over rows already on the tape.
inline NodeRef critic_mean(const nn::BoundNet& critic,
                           std::span<const std::vector<NodeRef>> rows,
                           Tape& t) {
  std::vector<NodeRef> vals;
  vals.reserve(rows.size());
  for (const auto& r : rows) vals.push_back(nn::mlp_forward(critic, r, t)[0]);
  return t.mul(t.sum(vals), t.constant(1.0 / static_cast<double>(rows.size())));
}

// E[D(real)] - E[D(fake)], both batches recorded as constants.
inline NodeRef critic_objective(const nn::BoundNet& critic, const Batch& real,
                                const Batch& fake, Tape& t) {
  if (real.count == 0 || fake.count == 0)
    throw std::invalid_argument("critic_objective: empty batch");
  if (real.dim != critic.net->input_dim() ||
      fake.dim != critic.net->input_dim())
    throw std::invalid_argument("critic_objective: dim mismatch");
  std::vector<std::vector<NodeRef>> rr, fr;
  for (std::size_t i = 0; i < real.count; ++i)
    rr.push_back(record_const_row(t, real.row(i), real.dim));
  for (std::size_t i = 0; i < fake.count; ++i)
    fr.push_back(record_const_row(t, fake.row(i), fake.dim));
  return t.sub(critic_mean(critic, rr, t), critic_mean(critic, fr, t));
}

// lambda * mean over interpolates of (||grad_x D(x_hat)||_2 - 1)^2. The
// input gradient is recorded on the tape, so the penalty differentiates
// correctly with respect to the critic parameters.
inline NodeRef gradient_penalty(const nn::BoundNet& critic, const Batch& real,
                                const Batch& fake, double lambda_gp,
                                rng::Stream& rs, Tape& t,
                                bool one_sided = true) {
  if (real.count != fake.count)
    throw std::invalid_argument("gradient_penalty: batch size mismatch");
  const int dim = real.dim;
  std::vector<NodeRef> terms;
  terms.reserve(real.count);
  for (std::size_t i = 0; i < real.count; ++i) {
    const double u = rs.uniform();  // one coefficient per interpolate
    std::vector<NodeRef> xhat(dim);
    for (int j = 0; j < dim; ++j)
      xhat[j] = t.leaf(u * real.row(i)[j] + (1.0 - u) * fake.row(i)[j]);
    NodeRef d = nn::mlp_forward(critic, xhat, t)[0];
    std::vector<NodeRef> g = ad::backward_nodes(t, d, xhat);
    std::vector<NodeRef> sq(dim);
    for (int j = 0; j < dim; ++j) sq[j] = t.mul(g[j], g[j]);
    // tiny floor keeps sqrt differentiable at zero gradient
    NodeRef norm = t.sqrt(t.add(t.sum(sq), t.constant(1e-24)));
    NodeRef dev = t.sub(norm, t.constant(1.0));
    if (one_sided) dev = t.relu(dev);
    terms.push_back(t.mul(dev, dev));
  }
  return t.mul(t.sum(terms),
               t.constant(lambda_gp / static_cast<double>(real.count)));
}

// One ascent step on the dual objective (minus penalty) for critic t.
// Returns the objective value before the step.
inline double critic_update(CriticBank& bank, int t_index, const Batch& real,
                            const Batch& fake, rng::Stream& rs) {
  if (t_index < 0 || t_index >= static_cast<int>(bank.critics.size()))
    throw std::out_of_range("critic_update: timestep out of range");
  nn::Network& critic = bank.critics[t_index];
  Tape tape;
  nn::BoundNet bc = nn::bind(critic, tape);
  NodeRef obj = critic_objective(bc, real, fake, tape);
  const double obj_value = tape.value(obj);
  NodeRef loss = tape.neg(obj);
  if (bank.mode.kind == LipschitzMode::Kind::gradient_penalty) {
    const int gi = bank.mode.gp_interpolates;
    if (gi > 0 && static_cast<std::size_t>(gi) < real.count) {
      // rows are already random draws; the leading slice is an unbiased pick
      Batch rs_sub(real.dim, gi), fs_sub(fake.dim, gi);
      std::copy(real.data.begin(), real.data.begin() + gi * real.dim,
                rs_sub.data.begin());
      std::copy(fake.data.begin(), fake.data.begin() + gi * fake.dim,
                fs_sub.data.begin());
      loss = tape.add(loss,
                      gradient_penalty(bc, rs_sub, fs_sub,
                                       bank.mode.lambda_gp, rs, tape,
                                       bank.mode.one_sided));
    } else {
      loss = tape.add(loss,
                      gradient_penalty(bc, real, fake, bank.mode.lambda_gp,
                                       rs, tape, bank.mode.one_sided));
    }
  }
  ad::GradientMap gm = ad::backward(tape, loss, bc.p);
  nn::adam_step(critic.params, gm.grads, bank.adam[t_index]);
  if (bank.mode.kind == LipschitzMode::Kind::weight_clip) {
    const double c = bank.mode.clip_c;
    for (double& w : critic.params) w = w < -c ? -c : (w > c ? c : w);
  }
  return obj_value;
}

}  // namespace legend::ot
