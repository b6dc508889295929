#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/autodiff.hpp"
#include "legend/data.hpp"
#include "legend/linalg.hpp"
#include "legend/nn.hpp"
#include "legend/ot.hpp"
#include "legend/rng.hpp"
#include "legend/sde.hpp"

// Adversarial learning of the hidden dynamics (f, g) from aggregate
// observations, plus the OU and NN baselines that model the drift directly
// on observation space.
namespace legend::learn {

using ad::NodeRef;
using ad::Tape;
using data::AggregateSeries;
using sde::Batch;

struct TrainConfig {
  int iterations = 800;
  int critic_steps = 5;
  std::size_t batch_size = 32;
  double lr = 1e-3;          // fast default for small iteration budgets
  double critic_lr = 1e-3;
  double beta1 = 0.5, beta2 = 0.9;
  std::uint64_t seed = 1;
  int hidden_dim = 0;  // 0 -> observation dim
  int width = 32;      // hidden layer width for f, g, D
  ot::LipschitzMode lipschitz;
  int substeps_per_obs = 5;
  double dt = 0.2;
  Mat sigma_root;  // hidden-noise root; empty -> default from cov0 constants
  bool reuse_draws_across_critic_steps = false;
  double divergence_limit = 1e6;
  // Weight on the mean squared drift added to the generator loss. Matching a
  // handful of marginals underdetermines the vector field between them; the
  // penalty selects the least-action field, which also extrapolates best.
  double drift_penalty = 0.0;
  // Final learning rate as a fraction of the initial one; both generator and
  // critic rates follow the same linear schedule. 1.0 keeps rates constant;
  // 0.0 anneals to zero so the adversarial game settles instead of
  // oscillating around the equilibrium.
  double lr_decay_to = 1.0;
};

// Linear schedule factor for iteration `iter` of `total`.
inline double lr_schedule(const TrainConfig& cfg, int iter, int total) {
  if (total <= 1 || cfg.lr_decay_to == 1.0) return 1.0;
  return 1.0 - (1.0 - cfg.lr_decay_to) * (static_cast<double>(iter) /
                                          (static_cast<double>(total) - 1.0));
}

struct TrainReport {
  struct Row {
    int iteration = 0;
    int timestep = 0;
    double critic_objective = 0.0;
    double gen_loss = 0.0;
  };
  std::vector<Row> rows;
  std::vector<double> final_w1;  // per observed timestep
  double wall_seconds = 0.0;

  void to_csv(std::ostream& os) const {
    os << "iteration,timestep,critic_objective,gen_loss\n";
    char buf[64];
    for (const Row& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", r.iteration,
                    r.timestep, r.critic_objective, r.gen_loss);
      os << buf;
    }
  }
};

class TrainDivergence : public std::runtime_error {
 public:
  TrainDivergence(int iteration, int timestep, const std::string& what)
      : std::runtime_error("training diverged at iteration " +
                           std::to_string(iteration) + ", timestep " +
                           std::to_string(timestep) + ": " + what) {}
};

// Drift recorded on a tape: maps hidden-state nodes to drift nodes.
using TapedDrift = std::function<std::vector<NodeRef>(
    std::span<const NodeRef>, Tape&)>;

inline TapedDrift taped_mlp_drift(const nn::BoundNet& bound) {
  return [&bound](std::span<const NodeRef> x, Tape& t) {
    return nn::mlp_forward(bound, x, t);
  };
}

// Euler chain on the tape with frozen noise draws (reparameterized pathwise
// path). Returns hidden-state nodes at each entry of `times`; x0 sits at
// times[0].
inline std::vector<std::vector<std::vector<NodeRef>>> simulate_on_tape(
    Tape& t, const TapedDrift& drift, const Batch& x0, const Mat& sigma_root,
    double dt, int substeps_per_obs, const std::vector<int>& times,
    std::uint64_t noise_seed, std::vector<NodeRef>* drift_sq = nullptr) {
  const int n = x0.dim;
  const double sqdt = std::sqrt(dt);
  std::vector<std::vector<std::vector<NodeRef>>> out;
  out.resize(times.size());
  std::vector<double> xi(n), nz(n);

  for (std::size_t i = 0; i < x0.count; ++i) {
    std::vector<NodeRef> x(n);
    for (int j = 0; j < n; ++j) x[j] = t.constant(x0.row(i)[j]);
    out[0].push_back(x);
    std::uint64_t substep = 0;
    for (std::size_t k = 1; k < times.size(); ++k) {
      const int gaps = times[k] - times[k - 1];
      for (int s = 0; s < gaps * substeps_per_obs; ++s, ++substep) {
        std::vector<NodeRef> d = drift(x, t);
        if (drift_sq)
          for (int j = 0; j < n; ++j) drift_sq->push_back(t.mul(d[j], d[j]));
        for (int j = 0; j < n; ++j)
          xi[j] = rng::gauss(noise_seed, substep, i,
                             static_cast<std::uint64_t>(j));
        sigma_root.matvec(xi.data(), nz.data());
        for (int j = 0; j < n; ++j)
          x[j] = t.add(x[j], t.add(t.mul(d[j], t.constant(dt)),
                                   t.constant(nz[j] * sqdt)));
      }
      out[k].push_back(x);
    }
  }
  return out;
}

inline Mat default_sigma_root(int n, double dt) {
  Mat root = sym_sqrt(make_cov(n, 0.0025, 0.002));
  for (double& v : root.a) v /= std::sqrt(dt);
  return root;
}

// Generator gradient of -sum_t mean D_t(f(x_t)) with frozen noise. Returns
// gradients for f and g plus the loss value.
struct GeneratorGrad {
  std::vector<double> grad_f, grad_g;
  double loss = 0.0;
};

inline GeneratorGrad generator_gradient(const sde::DiffusionModel& model,
                                        const ot::CriticBank& bank,
                                        const std::vector<int>& times,
                                        const Batch& x0,
                                        std::uint64_t noise_seed,
                                        double drift_penalty = 0.0) {
  Tape t;
  t.reserve(1 << 20);
  nn::BoundNet bg = nn::bind(model.g, t);
  nn::BoundNet bf = nn::bind(model.f, t);
  std::vector<NodeRef> drift_sq;
  auto hidden = simulate_on_tape(t, taped_mlp_drift(bg), x0, model.sigma_root,
                                 model.dt, model.substeps_per_obs, times,
                                 noise_seed,
                                 drift_penalty > 0.0 ? &drift_sq : nullptr);
  std::vector<NodeRef> terms;
  std::vector<nn::BoundNet> bcritics;
  bcritics.reserve(bank.critics.size());
  for (const auto& c : bank.critics) bcritics.push_back(nn::bind(c, t));
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<std::vector<NodeRef>> obs;
    obs.reserve(hidden[k].size());
    for (const auto& x : hidden[k]) obs.push_back(nn::mlp_forward(bf, x, t));
    terms.push_back(ot::critic_mean(bcritics[k], obs, t));
  }
  NodeRef loss = t.neg(t.sum(terms));
  if (drift_penalty > 0.0 && !drift_sq.empty()) {
    // Least-action bias: among the many vector fields matching the observed
    // marginals, prefer the one moving mass the least.
    NodeRef pen = t.mul(t.sum(drift_sq),
                        t.constant(drift_penalty / drift_sq.size()));
    loss = t.add(loss, pen);
  }
  GeneratorGrad out;
  out.loss = t.value(loss);
  ad::GradientMap gmf = ad::backward(t, loss, bf.p);
  ad::GradientMap gmg = ad::backward(t, loss, bg.p);
  out.grad_f = std::move(gmf.grads);
  out.grad_g = std::move(gmg.grads);
  return out;
}

// Fake observation batches from a plain (non-taped) simulation pass.
inline std::vector<Batch> generate_observations(const sde::DiffusionModel& m,
                                                const Batch& x0,
                                                const std::vector<int>& times,
                                                std::uint64_t noise_seed) {
  std::vector<int> gaps;
  for (std::size_t k = 1; k < times.size(); ++k)
    gaps.push_back(times[k] - times[k - 1]);
  std::vector<Batch> hidden =
      sde::simulate(m, x0, static_cast<int>(times.size()) - 1, noise_seed,
                    gaps);
  std::vector<Batch> out;
  for (const Batch& h : hidden) {
    Batch y(m.obs_dim, h.count);
    for (std::size_t i = 0; i < h.count; ++i)
      nn::mlp_eval(m.f, h.row(i), y.row(i));
    out.push_back(std::move(y));
  }
  return out;
}

struct DynamicsResult {
  sde::DiffusionModel model;
  ot::CriticBank critics;
  TrainReport report;
};

// Algorithm: alternate k critic ascent steps per observed timestep with one
// joint generator step on f and g; the generator gradient backpropagates
// through the whole Euler chain.
inline DynamicsResult train_dynamics(const AggregateSeries& series,
                                     const TrainConfig& cfg) {
  if (series.num_steps() < 2)
    throw std::invalid_argument("train_dynamics: need >= 2 timesteps");
  for (const Batch& b : series.batches)
    if (b.count < cfg.batch_size)
      throw std::invalid_argument("train_dynamics: batch_size exceeds data");

  const int m = series.dim;
  const int n = cfg.hidden_dim > 0 ? cfg.hidden_dim : m;
  const int w = cfg.width;

  DynamicsResult res;
  res.model.g = nn::mlp_new(std::vector<int>{n, w, w, w, n}, nn::Act::relu,
                            rng::mix64(cfg.seed ^ 0x67));
  res.model.f = nn::mlp_new(std::vector<int>{n, w, m}, nn::Act::relu,
                            rng::mix64(cfg.seed ^ 0x66));
  res.model.sigma_root =
      cfg.sigma_root.rows == n ? cfg.sigma_root : default_sigma_root(n, cfg.dt);
  res.model.dt = cfg.dt;
  res.model.substeps_per_obs = cfg.substeps_per_obs;
  res.model.hidden_dim = n;
  res.model.obs_dim = m;

  const int T = static_cast<int>(series.num_steps());
  res.critics = ot::CriticBank::make(T, m, w, 4, rng::mix64(cfg.seed ^ 0xD),
                                     cfg.lipschitz, cfg.critic_lr, cfg.beta1,
                                     cfg.beta2);
  res.critics.critic_steps_per_gen = cfg.critic_steps;

  nn::AdamState adam_f, adam_g;
  adam_f.lr = adam_g.lr = cfg.lr;
  adam_f.beta1 = adam_g.beta1 = cfg.beta1;
  adam_f.beta2 = adam_g.beta2 = cfg.beta2;

  sde::InitSpec init = sde::StandardNormal{n};
  rng::Stream gp_stream(cfg.seed, 0x67702a);
  std::vector<double> last_obj(T, 0.0);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double sched = lr_schedule(cfg, iter, cfg.iterations);
    adam_f.lr = adam_g.lr = cfg.lr * sched;
    for (auto& st : res.critics.adam) st.lr = cfg.critic_lr * sched;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const std::uint64_t draw =
          cfg.reuse_draws_across_critic_steps
              ? rng::mix64(cfg.seed ^ (0xA0 + iter))
              : rng::mix64(cfg.seed ^ (iter * 131ULL + k + 7));
      Batch x0 = sde::sample_initial(init, cfg.batch_size, draw, 1);
      std::vector<Batch> fake =
          generate_observations(res.model, x0, series.times, draw);
      for (int t = 0; t < T; ++t) {
        Batch real = data::empirical_batch(series, t, cfg.batch_size,
                                           rng::mix64(draw ^ 0xBEEF), k);
        last_obj[t] =
            ot::critic_update(res.critics, t, real, fake[t], gp_stream);
      }
    }

    const std::uint64_t gdraw = rng::mix64(cfg.seed ^ (iter * 977ULL + 13));
    Batch x0 = sde::sample_initial(init, cfg.batch_size, gdraw, 1);
    GeneratorGrad gg =
        generator_gradient(res.model, res.critics, series.times, x0, gdraw,
                           cfg.drift_penalty);
    if (!std::isfinite(gg.loss) || std::abs(gg.loss) > cfg.divergence_limit)
      throw TrainDivergence(iter, -1, "generator loss " +
                                          std::to_string(gg.loss));
    nn::adam_step(res.model.f.params, gg.grad_f, adam_f);
    nn::adam_step(res.model.g.params, gg.grad_g, adam_g);

    for (int t = 0; t < T; ++t)
      res.report.rows.push_back({iter, t, last_obj[t], gg.loss});
  }

  // final generated-vs-observed W1 per timestep (diagnostic)
  if (cfg.iterations > 0) {
    const std::size_t n_eval =
        std::min<std::size_t>(series.batches[0].count, 200);
    Batch x0 = sde::sample_initial(init, n_eval,
                                   rng::mix64(cfg.seed ^ 0xE7a1), 1);
    std::vector<Batch> fake = generate_observations(
        res.model, x0, series.times, rng::mix64(cfg.seed ^ 0xE7a2));
    for (int t = 0; t < T; ++t) {
      Batch real = data::empirical_batch(series, t, n_eval,
                                         rng::mix64(cfg.seed ^ 0xE7a3), t);
      res.report.final_w1.push_back(ot::w1_exact(real, fake[t]).first);
    }
  }
  return res;
}

// ---- baselines: dynamics directly on observation space ----

enum class BaselineKind { OU, NN };

inline BaselineKind baseline_from_name(const std::string& s) {
  if (s == "ou" || s == "OU") return BaselineKind::OU;
  if (s == "nn" || s == "NN") return BaselineKind::NN;
  throw std::invalid_argument("unknown baseline: " + s);
}

// A diffusion model with f = identity and hidden_dim = obs_dim.
struct ObservationModel {
  BaselineKind kind = BaselineKind::OU;
  int dim = 0;
  double log_theta = 0.0;          // OU: theta = exp(log_theta) > 0
  std::vector<double> mu;          // OU
  nn::Network drift_net;           // NN: one hidden ReLU layer (sum of ramps)
  Mat sigma_root;
  double dt = 0.2;
  int substeps_per_obs = 5;

  int param_groups() const { return kind == BaselineKind::OU ? 2 : 1; }

  sde::DriftFn drift() const {
    if (kind == BaselineKind::OU) {
      return sde::ou_drift(std::exp(log_theta), mu);
    }
    const nn::Network* net = &drift_net;
    return [net](const double* x, double* out) { nn::mlp_eval(*net, x, out); };
  }
};

inline Batch propagate_observations(const ObservationModel& m, const Batch& y,
                                    int gaps, std::uint64_t seed) {
  Batch cur = y;
  sde::DriftFn drift = m.drift();
  for (int s = 0; s < gaps * m.substeps_per_obs; ++s)
    cur = sde::euler_step(cur, drift, m.sigma_root, m.dt, seed, s);
  return cur;
}

struct BaselineResult {
  ObservationModel model;
  ot::CriticBank critics;
  TrainReport report;
};

inline BaselineResult train_baseline(const AggregateSeries& series,
                                     BaselineKind kind,
                                     const TrainConfig& cfg) {
  if (series.num_steps() < 2)
    throw std::invalid_argument("train_baseline: need >= 2 timesteps");
  const int m = series.dim;

  BaselineResult res;
  res.model.kind = kind;
  res.model.dim = m;
  res.model.dt = cfg.dt;
  res.model.substeps_per_obs = cfg.substeps_per_obs;
  res.model.sigma_root =
      cfg.sigma_root.rows == m ? cfg.sigma_root : default_sigma_root(m, cfg.dt);
  if (kind == BaselineKind::OU) {
    res.model.log_theta = 0.0;
    res.model.mu.assign(m, 0.0);
  } else {
    res.model.drift_net = nn::mlp_new(std::vector<int>{m, cfg.width, m},
                                      nn::Act::relu,
                                      rng::mix64(cfg.seed ^ 0xBB));
  }

  const int T = static_cast<int>(series.num_steps());
  // t = 0 is the model's own input distribution; critics cover t >= 1
  res.critics = ot::CriticBank::make(T - 1, m, cfg.width, 4,
                                     rng::mix64(cfg.seed ^ 0xBC),
                                     cfg.lipschitz, cfg.critic_lr, cfg.beta1,
                                     cfg.beta2);
  res.critics.critic_steps_per_gen = cfg.critic_steps;

  auto taped_drift = [&](std::span<const NodeRef> x, Tape& t,
                         std::span<const NodeRef> params,
                         const nn::BoundNet* bnet) -> std::vector<NodeRef> {
    if (kind == BaselineKind::NN) return nn::mlp_forward(*bnet, x, t);
    NodeRef theta = t.exp(params[0]);
    std::vector<NodeRef> out(m);
    for (int j = 0; j < m; ++j)
      out[j] = t.mul(theta, t.sub(params[1 + j], x[j]));
    return out;
  };

  nn::AdamState adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  rng::Stream gp_stream(cfg.seed, 0x67702b);
  std::vector<double> last_obj(T - 1, 0.0);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double sched = lr_schedule(cfg, iter, cfg.iterations);
    adam.lr = cfg.lr * sched;
    for (auto& st : res.critics.adam) st.lr = cfg.critic_lr * sched;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const std::uint64_t draw =
          rng::mix64(cfg.seed ^ (iter * 131ULL + k + 7));
      Batch y0 = data::empirical_batch(series, 0, cfg.batch_size, draw, 0);
      sde::DriftFn drift = res.model.drift();
      Batch cur = y0;
      int step = 0;
      for (int t = 1; t < T; ++t) {
        const int gaps = series.times[t] - series.times[t - 1];
        for (int s = 0; s < gaps * cfg.substeps_per_obs; ++s)
          cur = sde::euler_step(cur, drift, res.model.sigma_root, cfg.dt, draw,
                                step++);
        Batch real = data::empirical_batch(series, t, cfg.batch_size,
                                           rng::mix64(draw ^ 0xBEEF), k);
        last_obj[t - 1] =
            ot::critic_update(res.critics, t - 1, real, cur, gp_stream);
      }
    }

    // generator step on the drift parameters
    const std::uint64_t gdraw = rng::mix64(cfg.seed ^ (iter * 977ULL + 13));
    Batch y0 = data::empirical_batch(series, 0, cfg.batch_size, gdraw, 0);
    Tape t;
    t.reserve(1 << 18);
    std::vector<NodeRef> params;
    nn::BoundNet bnet;
    if (kind == BaselineKind::OU) {
      params.push_back(t.leaf(res.model.log_theta));
      for (double v : res.model.mu) params.push_back(t.leaf(v));
    } else {
      bnet = nn::bind(res.model.drift_net, t);
      params = bnet.p;
    }
    TapedDrift drift = [&](std::span<const NodeRef> x, Tape& tp) {
      return taped_drift(x, tp, params, &bnet);
    };
    auto states =
        simulate_on_tape(t, drift, y0, res.model.sigma_root, cfg.dt,
                         cfg.substeps_per_obs, series.times, gdraw);
    std::vector<nn::BoundNet> bcritics;
    for (const auto& c : res.critics.critics) bcritics.push_back(nn::bind(c, t));
    std::vector<NodeRef> terms;
    for (int ti = 1; ti < T; ++ti)
      terms.push_back(ot::critic_mean(bcritics[ti - 1], states[ti], t));
    NodeRef loss = t.neg(t.sum(terms));
    const double loss_v = t.value(loss);
    if (!std::isfinite(loss_v) || std::abs(loss_v) > cfg.divergence_limit)
      throw TrainDivergence(iter, -1, "baseline loss " +
                                          std::to_string(loss_v));
    ad::GradientMap gm = ad::backward(t, loss, params);
    if (kind == BaselineKind::OU) {
      std::vector<double> p;
      p.push_back(res.model.log_theta);
      p.insert(p.end(), res.model.mu.begin(), res.model.mu.end());
      nn::adam_step(p, gm.grads, adam);
      res.model.log_theta = p[0];
      res.model.mu.assign(p.begin() + 1, p.end());
    } else {
      nn::adam_step(res.model.drift_net.params, gm.grads, adam);
    }
    for (int ti = 1; ti < T; ++ti)
      res.report.rows.push_back({iter, ti, last_obj[ti - 1], loss_v});
  }
  return res;
}

}  // namespace legend::learn
