#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "legend/linalg.hpp"
#include "legend/nn.hpp"
#include "legend/rng.hpp"

// Euler-Maruyama simulation of the hidden process, drift abstractions, and
// seeded Gaussian batch sampling. Noise is keyed by (seed, substep, sample),
// so sample i's trajectory is independent of batch size.
namespace legend::sde {

// Row-major batch of samples.
struct Batch {
  int dim = 0;
  std::size_t count = 0;
  std::vector<double> data;

  Batch() = default;
  Batch(int d, std::size_t n) : dim(d), count(n), data(d * n, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * dim; }
  const double* row(std::size_t i) const { return data.data() + i * dim; }
};

using DriftFn = std::function<void(const double* x, double* out)>;

// The learned pair (f, g) plus noise root and step configuration.
struct DiffusionModel {
  nn::Network g;    // drift, R^n -> R^n
  nn::Network f;    // observation map, R^n -> R^m
  Mat sigma_root;   // n x n
  double dt = 0.2;
  int substeps_per_obs = 5;
  int hidden_dim = 0, obs_dim = 0;

  DriftFn drift() const {
    const nn::Network* net = &g;
    return [net](const double* x, double* out) { nn::mlp_eval(*net, x, out); };
  }
};

inline DriftFn ou_drift(double theta, std::vector<double> mu) {
  if (!(theta > 0.0)) throw std::invalid_argument("ou_drift: theta <= 0");
  return [theta, mu = std::move(mu)](const double* x, double* out) {
    for (std::size_t j = 0; j < mu.size(); ++j)
      out[j] = theta * (mu[j] - x[j]);
  };
}

// x' = x + drift(x) dt + sigma_root xi sqrt(dt), xi ~ N(0, I) keyed by
// (seed, step_key, sample index).
inline Batch euler_step(const Batch& x, const DriftFn& drift,
                        const Mat& sigma_root, double dt, std::uint64_t seed,
                        std::uint64_t step_key) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt <= 0");
  const int n = x.dim;
  const double sqdt = std::sqrt(dt);
  const bool noisy = !sigma_root.is_zero();
  Batch out(n, x.count);
  std::vector<double> d(n), xi(n), nz(n);
  for (std::size_t i = 0; i < x.count; ++i) {
    drift(x.row(i), d.data());
    for (int j = 0; j < n; ++j)
      if (!std::isfinite(d[j]))
        throw std::runtime_error("euler_step: non-finite drift at sample " +
                                 std::to_string(i));
    double* xo = out.row(i);
    const double* xi_row = x.row(i);
    for (int j = 0; j < n; ++j) xo[j] = xi_row[j] + d[j] * dt;
    if (noisy) {
      for (int j = 0; j < n; ++j)
        xi[j] = rng::gauss(seed, step_key, i, static_cast<std::uint64_t>(j));
      sigma_root.matvec(xi.data(), nz.data());
      for (int j = 0; j < n; ++j) xo[j] += nz[j] * sqdt;
    }
  }
  return out;
}

// Runs substeps_per_obs Euler steps per observation gap; returns T+1
// batches including the initial one. `gap_steps[t]` overrides the number of
// observation gaps between returned batch t and t+1 (for series with
// missing timesteps).
inline std::vector<Batch> simulate(const DiffusionModel& model,
                                   const Batch& x0, int num_obs_steps,
                                   std::uint64_t seed,
                                   const std::vector<int>& gaps_per_step = {}) {
  if (x0.dim != model.hidden_dim)
    throw std::invalid_argument("simulate: x0 dim mismatch");
  std::vector<Batch> out;
  out.reserve(num_obs_steps + 1);
  out.push_back(x0);
  DriftFn drift = model.drift();
  std::uint64_t substep = 0;
  for (int t = 0; t < num_obs_steps; ++t) {
    const int gaps = gaps_per_step.empty() ? 1 : gaps_per_step[t];
    Batch cur = out.back();
    for (int s = 0; s < gaps * model.substeps_per_obs; ++s)
      cur = euler_step(cur, drift, model.sigma_root, model.dt, seed,
                       substep++);
    out.push_back(std::move(cur));
  }
  return out;
}

// ---- initial-state specs ----

struct StandardNormal {
  int dim = 0;
};
struct NormalSpec {
  std::vector<double> mean;
  Mat cov_root;
};
struct UniformSpec {
  double lo = 0.0, hi = 0.0;
  int dim = 0;
};
using InitSpec = std::variant<StandardNormal, NormalSpec, UniformSpec>;

inline int init_dim(const InitSpec& spec) {
  if (auto* s = std::get_if<StandardNormal>(&spec)) return s->dim;
  if (auto* s = std::get_if<NormalSpec>(&spec))
    return static_cast<int>(s->mean.size());
  return std::get<UniformSpec>(spec).dim;
}

inline Batch sample_initial(const InitSpec& spec, std::size_t count,
                            std::uint64_t seed, std::uint64_t key = 0) {
  if (count == 0) throw std::invalid_argument("sample_initial: count == 0");
  const int n = init_dim(spec);
  Batch out(n, count);
  if (auto* u = std::get_if<UniformSpec>(&spec)) {
    if (u->lo >= u->hi) throw std::invalid_argument("sample_initial: lo >= hi");
    for (std::size_t i = 0; i < count; ++i)
      for (int j = 0; j < n; ++j)
        out.row(i)[j] =
            u->lo + (u->hi - u->lo) *
                        rng::u01(seed, key, i, static_cast<std::uint64_t>(j));
    return out;
  }
  std::vector<double> xi(n), nz(n);
  for (std::size_t i = 0; i < count; ++i) {
    for (int j = 0; j < n; ++j)
      xi[j] = rng::gauss(seed, key, i, static_cast<std::uint64_t>(j));
    if (auto* s = std::get_if<NormalSpec>(&spec)) {
      s->cov_root.matvec(xi.data(), nz.data());
      for (int j = 0; j < n; ++j) out.row(i)[j] = s->mean[j] + nz[j];
    } else {
      for (int j = 0; j < n; ++j) out.row(i)[j] = xi[j];
    }
  }
  return out;
}

}  // namespace legend::sde
