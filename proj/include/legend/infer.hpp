#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/autodiff.hpp"
#include "legend/data.hpp"
#include "legend/learn.hpp"
#include "legend/nn.hpp"
#include "legend/ot.hpp"
#include "legend/rng.hpp"
#include "legend/sde.hpp"

// Filtering and smoothing: recurrent heads h mapping an observation prefix
// (or reversed suffix) plus injected Gaussian noise to hidden-state samples
// pi_t, trained against Wasserstein objectives with the dynamics frozen.
namespace legend::infer {

using ad::NodeRef;
using ad::Tape;
using data::AggregateSeries;
using learn::TrainConfig;
using learn::TrainReport;
using sde::Batch;

struct BarycenterWeights {
  double lambda1 = 0.0, lambda2 = 0.0;
};

inline BarycenterWeights barycenter_weights(int t, int T) {
  if (T <= 0 || t < 0 || t > T)
    throw std::out_of_range("barycenter_weights: need 0 <= t <= T, T > 0");
  const double l1 = static_cast<double>(t) / static_cast<double>(T);
  return {l1, 1.0 - l1};
}

struct InferenceHead {
  enum class Variant { forward, backward, smoothing };
  Variant variant = Variant::forward;
  nn::RecurrentNetwork rnn;  // input: [y_t, noise], output: pi_t in R^n
  int obs_dim = 0, hidden_dim = 0, noise_dim = 0;
  nn::Network backward_drift;  // reverse-time transition (backward variant)

  // observed time indices in this head's reading order
  std::vector<int> reading_order(const std::vector<int>& times) const {
    std::vector<int> order = times;
    if (variant == Variant::backward)
      std::reverse(order.begin(), order.end());
    return order;
  }
};

inline InferenceHead head_new(InferenceHead::Variant variant, int obs_dim,
                              int hidden_dim, int lstm_width,
                              std::uint64_t seed) {
  InferenceHead h;
  h.variant = variant;
  h.obs_dim = obs_dim;
  h.hidden_dim = hidden_dim;
  h.noise_dim = hidden_dim;
  h.rnn = nn::lstm_new(obs_dim + h.noise_dim, lstm_width, hidden_dim, seed);
  return h;
}

// Observation pseudo-sequences: per sample, one independently drawn
// observation per timestep (aggregate bags carry no identity links) plus a
// fresh noise vector per step.
inline std::vector<std::vector<double>> head_input_sequence(
    const InferenceHead& h, const AggregateSeries& series,
    const std::vector<int>& order, std::size_t sample_index,
    std::uint64_t seed) {
  std::vector<std::vector<double>> seq;
  seq.reserve(order.size());
  for (std::size_t s = 0; s < order.size(); ++s) {
    const Batch& bag = series.at_time(order[s]);
    const std::size_t pick = std::min<std::size_t>(
        static_cast<std::size_t>(rng::u01(seed, 0x0b5, s, sample_index) *
                                 static_cast<double>(bag.count)),
        bag.count - 1);
    std::vector<double> in(h.obs_dim + h.noise_dim);
    for (int j = 0; j < h.obs_dim; ++j) in[j] = bag.row(pick)[j];
    for (int j = 0; j < h.noise_dim; ++j)
      in[h.obs_dim + j] = rng::gauss(seed, 0x0e1 + s, sample_index,
                                     static_cast<std::uint64_t>(j));
    seq.push_back(std::move(in));
  }
  return seq;
}

// pi_t batches in reading order (plain evaluation).
inline std::vector<Batch> head_sample(const InferenceHead& h,
                                      const AggregateSeries& series,
                                      std::size_t count, std::uint64_t seed) {
  const std::vector<int> order = h.reading_order(series.times);
  std::vector<Batch> out(order.size(), Batch(h.hidden_dim, count));
  std::vector<std::vector<double>> pis;
  for (std::size_t i = 0; i < count; ++i) {
    auto seq = head_input_sequence(h, series, order, i, seed);
    nn::rnn_eval(h.rnn, seq, pis);
    for (std::size_t s = 0; s < order.size(); ++s)
      for (int j = 0; j < h.hidden_dim; ++j) out[s].row(i)[j] = pis[s][j];
  }
  return out;
}

// Same draws, recorded on the tape through a bound RNN.
inline std::vector<std::vector<std::vector<NodeRef>>> head_forward_on_tape(
    const InferenceHead& h, const nn::BoundRnn& brnn,
    const AggregateSeries& series, std::size_t count, std::uint64_t seed,
    Tape& t) {
  const std::vector<int> order = h.reading_order(series.times);
  std::vector<std::vector<std::vector<NodeRef>>> out(order.size());
  for (std::size_t i = 0; i < count; ++i) {
    auto seq = head_input_sequence(h, series, order, i, seed);
    std::vector<std::vector<NodeRef>> nseq;
    nseq.reserve(seq.size());
    for (const auto& row : seq) {
      std::vector<NodeRef> r(row.size());
      for (std::size_t j = 0; j < row.size(); ++j) r[j] = t.constant(row[j]);
      nseq.push_back(std::move(r));
    }
    auto pis = nn::rnn_forward(brnn, nseq, t);
    for (std::size_t s = 0; s < order.size(); ++s)
      out[s].push_back(std::move(pis[s]));
  }
  return out;
}

// One observation gap of Euler propagation for plain batches.
inline Batch propagate_batch(const nn::Network& g, const Mat& sigma_root,
                             double dt, int substeps, const Batch& x, int gaps,
                             std::uint64_t seed) {
  Batch cur = x;
  sde::DriftFn drift = [&g](const double* xi, double* out) {
    nn::mlp_eval(g, xi, out);
  };
  for (int s = 0; s < gaps * substeps; ++s)
    cur = sde::euler_step(cur, drift, sigma_root, dt, seed, s);
  return cur;
}

// Taped propagation of per-sample node states with frozen noise.
inline std::vector<std::vector<NodeRef>> propagate_nodes(
    Tape& t, const learn::TapedDrift& drift,
    const std::vector<std::vector<NodeRef>>& x, const Mat& sigma_root,
    double dt, int substeps, int gaps, std::uint64_t seed) {
  const int n = static_cast<int>(x.empty() ? 0 : x[0].size());
  const double sqdt = std::sqrt(dt);
  std::vector<double> xi(n), nz(n);
  std::vector<std::vector<NodeRef>> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int s = 0; s < gaps * substeps; ++s) {
      std::vector<NodeRef> d = drift(out[i], t);
      for (int j = 0; j < n; ++j)
        xi[j] = rng::gauss(seed, s, i, static_cast<std::uint64_t>(j));
      sigma_root.matvec(xi.data(), nz.data());
      for (int j = 0; j < n; ++j)
        out[i][j] = t.add(out[i][j], t.add(t.mul(d[j], t.constant(dt)),
                                           t.constant(nz[j] * sqdt)));
    }
  }
  return out;
}

inline Batch apply_observation_map(const nn::Network& f, const Batch& x) {
  Batch y(f.output_dim(), x.count);
  for (std::size_t i = 0; i < x.count; ++i) nn::mlp_eval(f, x.row(i), y.row(i));
  return y;
}

struct HeadResult {
  InferenceHead head;
  ot::CriticBank data_critics;         // D1_t on observation space
  ot::CriticBank consistency_critics;  // D2_s: recursion (s >= 1) + base anchor (s = 0)
  TrainReport report;
};

// Shared trainer for the forward and backward filtering heads. The
// consistency drift is the frozen model g (forward) or the jointly trained
// backward drift g_b (backward).
inline HeadResult train_filter_impl(const sde::DiffusionModel& model,
                                    const AggregateSeries& series,
                                    const TrainConfig& cfg,
                                    InferenceHead::Variant variant) {
  if (series.dim != model.obs_dim)
    throw std::invalid_argument("train_filter: data/model dim mismatch");
  const int m = model.obs_dim, n = model.hidden_dim;
  const bool backward = variant == InferenceHead::Variant::backward;

  HeadResult res;
  res.head = head_new(variant, m, n, cfg.width,
                      rng::mix64(cfg.seed ^ (backward ? 0x4857 : 0x4846)));
  if (backward)
    res.head.backward_drift =
        nn::mlp_new(std::vector<int>{n, cfg.width, n}, nn::Act::relu,
                    rng::mix64(cfg.seed ^ 0x6762));

  const std::vector<int> order = res.head.reading_order(series.times);
  const int S = static_cast<int>(order.size());
  res.data_critics = ot::CriticBank::make(
      S, m, cfg.width, 4, rng::mix64(cfg.seed ^ 0xD1), cfg.lipschitz,
      cfg.critic_lr, cfg.beta1, cfg.beta2);
  // Critic s >= 1 enforces the recursion pi_s ~ propagate(pi_{s-1}); critic 0
  // anchors the base case: pi at the first reading-order time must match the
  // model's own hidden marginal there (the prior pushed through g). Without
  // the anchor the whole chain can drift to a region of hidden space where f
  // still explains the data but g behaves differently, which wrecks
  // prediction.
  res.consistency_critics = ot::CriticBank::make(
      S, n, cfg.width, 4, rng::mix64(cfg.seed ^ 0xD2), cfg.lipschitz,
      cfg.critic_lr, cfg.beta1, cfg.beta2);

  nn::AdamState adam_head, adam_gb;
  adam_head.lr = adam_gb.lr = cfg.lr;
  adam_head.beta1 = adam_gb.beta1 = cfg.beta1;
  adam_head.beta2 = adam_gb.beta2 = cfg.beta2;

  rng::Stream gp_stream(cfg.seed, 0x677046);
  std::vector<double> last_obj(S, 0.0);

  auto step_gaps = [&](int s) { return std::abs(order[s] - order[s - 1]); };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double sched = learn::lr_schedule(cfg, iter, cfg.iterations);
    adam_head.lr = adam_gb.lr = cfg.lr * sched;
    for (auto& st : res.data_critics.adam) st.lr = cfg.critic_lr * sched;
    for (auto& st : res.consistency_critics.adam)
      st.lr = cfg.critic_lr * sched;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const std::uint64_t draw =
          rng::mix64(cfg.seed ^ (iter * 131ULL + k + 0x11));
      std::vector<Batch> pi = head_sample(res.head, series, cfg.batch_size,
                                          draw);
      for (int s = 0; s < S; ++s) {
        // series index of order[s]
        std::size_t si = 0;
        for (std::size_t q = 0; q < series.times.size(); ++q)
          if (series.times[q] == order[s]) si = q;
        Batch real = data::empirical_batch(series, si, cfg.batch_size,
                                           rng::mix64(draw ^ 0xF00D), k);
        Batch fake = apply_observation_map(model.f, pi[s]);
        last_obj[s] =
            ot::critic_update(res.data_critics, s, real, fake, gp_stream);
        if (s >= 1) {
          const nn::Network& gnet =
              backward ? res.head.backward_drift : model.g;
          Batch prop = propagate_batch(gnet, model.sigma_root, model.dt,
                                       model.substeps_per_obs, pi[s - 1],
                                       step_gaps(s),
                                       rng::mix64(draw ^ (0x9A + s)));
          ot::critic_update(res.consistency_critics, s, pi[s], prop,
                            gp_stream);
        } else {
          Batch prior = sde::sample_initial(sde::StandardNormal{n},
                                            cfg.batch_size,
                                            rng::mix64(draw ^ 0x9A), 1);
          Batch anchor =
              order[0] == 0
                  ? prior
                  : propagate_batch(model.g, model.sigma_root, model.dt,
                                    model.substeps_per_obs, prior, order[0],
                                    rng::mix64(draw ^ 0x9B));
          ot::critic_update(res.consistency_critics, 0, pi[0], anchor,
                            gp_stream);
        }
      }
    }

    // head update (f, g, critics frozen; g_b trains jointly when backward)
    const std::uint64_t gdraw = rng::mix64(cfg.seed ^ (iter * 977ULL + 0x29));
    Tape t;
    t.reserve(1 << 20);
    nn::BoundRnn brnn = nn::bind(res.head.rnn, t);
    nn::BoundNet bf = nn::bind(model.f, t);
    nn::BoundNet bg_cons;
    if (backward)
      bg_cons = nn::bind(res.head.backward_drift, t);
    else
      bg_cons = nn::bind(model.g, t);
    std::vector<nn::BoundNet> bd1, bd2;
    for (const auto& c : res.data_critics.critics) bd1.push_back(nn::bind(c, t));
    for (const auto& c : res.consistency_critics.critics)
      bd2.push_back(nn::bind(c, t));

    auto pi = head_forward_on_tape(res.head, brnn, series, cfg.batch_size,
                                   gdraw, t);
    std::vector<NodeRef> terms;
    learn::TapedDrift drift = learn::taped_mlp_drift(bg_cons);
    for (int s = 0; s < S; ++s) {
      std::vector<std::vector<NodeRef>> obs;
      for (const auto& x : pi[s]) obs.push_back(nn::mlp_forward(bf, x, t));
      terms.push_back(t.neg(ot::critic_mean(bd1[s], obs, t)));
      if (s >= 1) {
        auto prop = propagate_nodes(t, drift, pi[s - 1], model.sigma_root,
                                    model.dt, model.substeps_per_obs,
                                    step_gaps(s),
                                    rng::mix64(gdraw ^ (0x9A + s)));
        terms.push_back(t.sub(ot::critic_mean(bd2[s], pi[s], t),
                              ot::critic_mean(bd2[s], prop, t)));
      } else {
        // Base-case anchor: only pi[0] carries gradient, the reference
        // marginal is a constant sample from the model.
        terms.push_back(ot::critic_mean(bd2[0], pi[0], t));
      }
    }
    NodeRef loss = t.sum(terms);
    const double loss_v = t.value(loss);
    if (!std::isfinite(loss_v) || std::abs(loss_v) > cfg.divergence_limit)
      throw learn::TrainDivergence(iter, -1,
                                   "head loss " + std::to_string(loss_v));
    ad::GradientMap gm = ad::backward(t, loss, brnn.p);
    nn::adam_step(res.head.rnn.params, gm.grads, adam_head);
    if (backward) {
      ad::GradientMap gmb = ad::backward(t, loss, bg_cons.p);
      nn::adam_step(res.head.backward_drift.params, gmb.grads, adam_gb);
    }
    for (int s = 0; s < S; ++s)
      res.report.rows.push_back({iter, order[s], last_obj[s], loss_v});
  }
  return res;
}

inline HeadResult train_filter(const sde::DiffusionModel& model,
                               const AggregateSeries& series,
                               const TrainConfig& cfg) {
  return train_filter_impl(model, series, cfg,
                           InferenceHead::Variant::forward);
}

inline HeadResult train_backward(const sde::DiffusionModel& model,
                                 const AggregateSeries& series,
                                 const TrainConfig& cfg) {
  return train_filter_impl(model, series, cfg,
                           InferenceHead::Variant::backward);
}

struct SmootherResult {
  InferenceHead head;
  ot::CriticBank data_critics;      // D1_t
  ot::CriticBank forward_critics;   // D2_t vs pi^f
  ot::CriticBank backward_critics;  // D3_t vs pi^b
  TrainReport report;
};

// Smoothing head trained against the data-fit term plus the weighted
// barycenter terms to the frozen forward and backward heads.
inline SmootherResult train_smoother(const sde::DiffusionModel& model,
                                     const AggregateSeries& series,
                                     const InferenceHead& fwd,
                                     const InferenceHead& bwd,
                                     const TrainConfig& cfg) {
  if (series.gap >= 0 && !series.has_time(series.gap - 1))
    throw std::out_of_range("train_smoother: gap has no predecessor");
  const int m = model.obs_dim, n = model.hidden_dim;
  const int S = static_cast<int>(series.times.size());
  const int T_max = series.times.back();

  SmootherResult res;
  res.head = head_new(InferenceHead::Variant::smoothing, m, n, cfg.width,
                      rng::mix64(cfg.seed ^ 0x4853));
  res.data_critics = ot::CriticBank::make(
      S, m, cfg.width, 4, rng::mix64(cfg.seed ^ 0xE1), cfg.lipschitz,
      cfg.critic_lr, cfg.beta1, cfg.beta2);
  res.forward_critics = ot::CriticBank::make(
      S, n, cfg.width, 4, rng::mix64(cfg.seed ^ 0xE2), cfg.lipschitz,
      cfg.critic_lr, cfg.beta1, cfg.beta2);
  res.backward_critics = ot::CriticBank::make(
      S, n, cfg.width, 4, rng::mix64(cfg.seed ^ 0xE3), cfg.lipschitz,
      cfg.critic_lr, cfg.beta1, cfg.beta2);

  nn::AdamState adam_head;
  adam_head.lr = cfg.lr;
  adam_head.beta1 = cfg.beta1;
  adam_head.beta2 = cfg.beta2;
  rng::Stream gp_stream(cfg.seed, 0x677053);
  std::vector<double> last_obj(S, 0.0);

  // backward head emits pi in reversed reading order; map back to series order
  auto backward_to_series = [&](std::vector<Batch>& pib) {
    std::reverse(pib.begin(), pib.end());
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double sched = learn::lr_schedule(cfg, iter, cfg.iterations);
    adam_head.lr = cfg.lr * sched;
    for (auto& st : res.data_critics.adam) st.lr = cfg.critic_lr * sched;
    for (auto& st : res.forward_critics.adam) st.lr = cfg.critic_lr * sched;
    for (auto& st : res.backward_critics.adam) st.lr = cfg.critic_lr * sched;
    for (int k = 0; k < cfg.critic_steps; ++k) {
      const std::uint64_t draw =
          rng::mix64(cfg.seed ^ (iter * 131ULL + k + 0x31));
      std::vector<Batch> pis = head_sample(res.head, series, cfg.batch_size,
                                           draw);
      std::vector<Batch> pif = head_sample(fwd, series, cfg.batch_size,
                                           rng::mix64(draw ^ 0x0f));
      std::vector<Batch> pib = head_sample(bwd, series, cfg.batch_size,
                                           rng::mix64(draw ^ 0x0b));
      backward_to_series(pib);
      for (int s = 0; s < S; ++s) {
        Batch real = data::empirical_batch(series, s, cfg.batch_size,
                                           rng::mix64(draw ^ 0xF00E), k);
        Batch fake = apply_observation_map(model.f, pis[s]);
        last_obj[s] =
            ot::critic_update(res.data_critics, s, real, fake, gp_stream);
        ot::critic_update(res.forward_critics, s, pis[s], pif[s], gp_stream);
        ot::critic_update(res.backward_critics, s, pis[s], pib[s], gp_stream);
      }
    }

    const std::uint64_t gdraw = rng::mix64(cfg.seed ^ (iter * 977ULL + 0x41));
    std::vector<Batch> pif = head_sample(fwd, series, cfg.batch_size,
                                         rng::mix64(gdraw ^ 0x0f));
    std::vector<Batch> pib = head_sample(bwd, series, cfg.batch_size,
                                         rng::mix64(gdraw ^ 0x0b));
    backward_to_series(pib);

    Tape t;
    t.reserve(1 << 20);
    nn::BoundRnn brnn = nn::bind(res.head.rnn, t);
    nn::BoundNet bf = nn::bind(model.f, t);
    std::vector<nn::BoundNet> bd1, bd2, bd3;
    for (const auto& c : res.data_critics.critics) bd1.push_back(nn::bind(c, t));
    for (const auto& c : res.forward_critics.critics)
      bd2.push_back(nn::bind(c, t));
    for (const auto& c : res.backward_critics.critics)
      bd3.push_back(nn::bind(c, t));

    auto pis = head_forward_on_tape(res.head, brnn, series, cfg.batch_size,
                                    gdraw, t);
    std::vector<NodeRef> terms;
    for (int s = 0; s < S; ++s) {
      const BarycenterWeights w = barycenter_weights(series.times[s], T_max);
      std::vector<std::vector<NodeRef>> obs;
      for (const auto& x : pis[s]) obs.push_back(nn::mlp_forward(bf, x, t));
      terms.push_back(t.neg(ot::critic_mean(bd1[s], obs, t)));
      if (w.lambda1 > 0.0)
        terms.push_back(t.mul(t.constant(w.lambda1),
                              ot::critic_mean(bd2[s], pis[s], t)));
      if (w.lambda2 > 0.0)
        terms.push_back(t.mul(t.constant(w.lambda2),
                              ot::critic_mean(bd3[s], pis[s], t)));
    }
    NodeRef loss = t.sum(terms);
    const double loss_v = t.value(loss);
    if (!std::isfinite(loss_v) || std::abs(loss_v) > cfg.divergence_limit)
      throw learn::TrainDivergence(iter, -1,
                                   "smoother loss " + std::to_string(loss_v));
    ad::GradientMap gm = ad::backward(t, loss, brnn.p);
    nn::adam_step(res.head.rnn.params, gm.grads, adam_head);
    for (int s = 0; s < S; ++s)
      res.report.rows.push_back({iter, series.times[s], last_obj[s], loss_v});
  }
  return res;
}

// ---- predictions ----

inline Batch predict_next(const sde::DiffusionModel& model,
                          const InferenceHead& head,
                          const AggregateSeries& series,
                          std::size_t num_samples, std::uint64_t seed) {
  std::vector<Batch> pi = head_sample(head, series, num_samples, seed);
  Batch last = propagate_batch(model.g, model.sigma_root, model.dt,
                               model.substeps_per_obs, pi.back(), 1,
                               rng::mix64(seed ^ 0x9Ee));
  return apply_observation_map(model.f, last);
}

inline Batch predict_missing(const sde::DiffusionModel& model,
                             const InferenceHead& smoother,
                             const AggregateSeries& series, int k,
                             std::size_t num_samples, std::uint64_t seed) {
  if (k <= series.times.front() || k >= series.times.back())
    throw std::out_of_range("predict_missing: k must be interior");
  if (!series.has_time(k - 1))
    throw std::out_of_range("predict_missing: timestep k-1 not observed");
  std::vector<Batch> pi = head_sample(smoother, series, num_samples, seed);
  std::size_t idx = 0;
  for (std::size_t s = 0; s < series.times.size(); ++s)
    if (series.times[s] == k - 1) idx = s;
  Batch prev = propagate_batch(model.g, model.sigma_root, model.dt,
                               model.substeps_per_obs, pi[idx], 1,
                               rng::mix64(seed ^ 0x9Ef));
  return apply_observation_map(model.f, prev);
}

// ---- objective values on fixed batches (plain evaluation) ----

inline double critic_value(const nn::Network& d, const Batch& b) {
  double acc = 0.0;
  double out;
  for (std::size_t i = 0; i < b.count; ++i) {
    nn::mlp_eval(d, b.row(i), &out);
    acc += out;
  }
  return acc / static_cast<double>(b.count);
}

// Sum over t of E[D1(y_t)] - E[D1(f(pi_t))].
inline double filtering_data_fit_value(const sde::DiffusionModel& model,
                                       const ot::CriticBank& d1,
                                       const std::vector<Batch>& pi,
                                       const std::vector<Batch>& y) {
  double acc = 0.0;
  for (std::size_t s = 0; s < pi.size(); ++s) {
    Batch fake = apply_observation_map(model.f, pi[s]);
    acc += critic_value(d1.critics[s], y[s]) -
           critic_value(d1.critics[s], fake);
  }
  return acc;
}

// Data-fit plus weighted barycenter terms against fixed pi^f / pi^b batches.
inline double smoothing_objective_value(
    const sde::DiffusionModel& model, const ot::CriticBank& d1,
    const ot::CriticBank& d2, const ot::CriticBank& d3,
    const std::vector<Batch>& pi_s, const std::vector<Batch>& pi_f,
    const std::vector<Batch>& pi_b, const std::vector<Batch>& y,
    const std::vector<int>& times, int T_max) {
  double acc = 0.0;
  for (std::size_t s = 0; s < pi_s.size(); ++s) {
    const BarycenterWeights w = barycenter_weights(times[s], T_max);
    Batch fake = apply_observation_map(model.f, pi_s[s]);
    acc += critic_value(d1.critics[s], y[s]) -
           critic_value(d1.critics[s], fake);
    acc += w.lambda1 * (critic_value(d2.critics[s], pi_s[s]) -
                        critic_value(d2.critics[s], pi_f[s]));
    acc += w.lambda2 * (critic_value(d3.critics[s], pi_s[s]) -
                        critic_value(d3.critics[s], pi_b[s]));
  }
  return acc;
}

}  // namespace legend::infer
