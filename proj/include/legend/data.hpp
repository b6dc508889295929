#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "legend/linalg.hpp"
#include "legend/rng.hpp"
#include "legend/sde.hpp"

// Synthetic dataset generation, aggregate subsampling, and CSV ingestion.
// Series are bags of i.i.d. samples per timestep; no identity links exist
// across timesteps.
namespace legend::data {

using sde::Batch;

struct AggregateSeries {
  int dim = 0;
  std::vector<int> times;      // sorted time indices (may have gaps)
  std::vector<Batch> batches;  // one bag per entry of `times`
  int gap = -1;                // marked missing timestep for smoothing, or -1
  std::string provenance;

  std::size_t num_steps() const { return times.size(); }

  const Batch& at_time(int t) const {
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] == t) return batches[i];
    throw std::out_of_range("no timestep " + std::to_string(t));
  }

  bool has_time(int t) const {
    for (int tt : times)
      if (tt == t) return true;
    return false;
  }
};

// Uniform without-replacement minibatch from timestep index `step`.
inline Batch empirical_batch(const AggregateSeries& s, std::size_t step,
                             std::size_t batch_size, std::uint64_t seed,
                             std::uint64_t key = 0) {
  if (step >= s.batches.size())
    throw std::out_of_range("empirical_batch: bad step");
  const Batch& src = s.batches[step];
  if (batch_size > src.count)
    throw std::invalid_argument("empirical_batch: batch_size too large");
  std::vector<std::uint32_t> idx(src.count);
  for (std::size_t i = 0; i < src.count; ++i)
    idx[i] = static_cast<std::uint32_t>(i);
  // partial Fisher-Yates, keyed
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng::u01(seed, key, step, i) *
                                     static_cast<double>(src.count - i));
    std::swap(idx[i], idx[std::min(j, src.count - 1)]);
  }
  Batch out(src.dim, batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    for (int j = 0; j < src.dim; ++j) out.row(i)[j] = src.row(idx[i])[j];
  return out;
}

inline AggregateSeries subsample(const AggregateSeries& s, std::size_t count,
                                 std::uint64_t seed) {
  AggregateSeries out;
  out.dim = s.dim;
  out.times = s.times;
  out.gap = s.gap;
  out.provenance = s.provenance + "/subsampled";
  for (std::size_t k = 0; k < s.batches.size(); ++k)
    out.batches.push_back(empirical_batch(s, k, count, seed, 0x5b5b));
  return out;
}

// Series with timestep `t` removed and marked as the gap.
inline AggregateSeries drop_timestep(const AggregateSeries& s, int t) {
  AggregateSeries out;
  out.dim = s.dim;
  out.gap = t;
  out.provenance = s.provenance;
  bool found = false;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] == t) {
      found = true;
      continue;
    }
    out.times.push_back(s.times[i]);
    out.batches.push_back(s.batches[i]);
  }
  if (!found) throw std::out_of_range("drop_timestep: no such timestep");
  return out;
}

// Series truncated to time indices <= t_max.
inline AggregateSeries prefix(const AggregateSeries& s, int t_max) {
  AggregateSeries out;
  out.dim = s.dim;
  out.provenance = s.provenance;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    if (s.times[i] > t_max) continue;
    out.times.push_back(s.times[i]);
    out.batches.push_back(s.batches[i]);
  }
  return out;
}

// ---- synthetic generators (Synthetic-1/2/3) ----

enum class SynKind { syn1, syn2, syn3 };

inline SynKind syn_from_name(const std::string& name) {
  if (name == "syn1") return SynKind::syn1;
  if (name == "syn2") return SynKind::syn2;
  if (name == "syn3") return SynKind::syn3;
  throw std::invalid_argument("unknown dataset: " + name);
}

struct SyntheticSpec {
  SynKind kind = SynKind::syn1;
  int dim = 2;
  std::size_t generated_per_step = 1000;
  std::size_t observed_per_step = 500;
  double dt = 0.2;
  int substeps = 5;
  int num_obs_times = 4;  // x_0 .. x_3
  bool zero_noise = false;

  Mat cov0() const { return make_cov(dim, 0.0025, 0.002); }  // per-substep
  Mat cov1() const { return make_cov(dim, 0.04, 0.032); }    // syn1 x0
  Mat cov2() const { return make_cov(dim, 0.01, 0.008); }    // syn2 x0
};

struct SyntheticData {
  AggregateSeries observed;       // y_t bags (observed_per_step samples)
  AggregateSeries observed_full;  // all generated y_t samples
  AggregateSeries hidden;         // ground-truth x_t (diagnostics only)
};

inline double syn_obs_map(SynKind kind, double x) {
  switch (kind) {
    case SynKind::syn1: return 2.0 * x;
    case SynKind::syn2: return std::exp(x);
    case SynKind::syn3: return std::log(std::abs(x) + 1e-8);
  }
  return x;
}

inline sde::DriftFn syn_drift(SynKind kind, int dim) {
  switch (kind) {
    case SynKind::syn1:
      return [dim](const double* x, double* out) {
        for (int j = 0; j < dim; ++j) out[j] = 0.25 * x[j];
      };
    case SynKind::syn2:
      return [dim](const double* x, double* out) {
        for (int j = 0; j < dim; ++j) out[j] = 0.1 * x[j] * x[j] + 0.5 * x[j];
      };
    case SynKind::syn3:
      return [dim](const double* x, double* out) {
        for (int j = 0; j < dim; ++j) out[j] = 0.5 * x[j] + std::abs(x[j]);
      };
  }
  return {};
}

inline SyntheticData gen_synthetic(const SyntheticSpec& spec,
                                   std::uint64_t seed) {
  const int d = spec.dim;
  sde::InitSpec init;
  switch (spec.kind) {
    case SynKind::syn1:
      init = sde::NormalSpec{std::vector<double>(d, 0.0),
                             sym_sqrt(spec.cov1())};
      break;
    case SynKind::syn2:
      init = sde::NormalSpec{std::vector<double>(d, 0.0),
                             sym_sqrt(spec.cov2())};
      break;
    case SynKind::syn3:
      init = sde::UniformSpec{-2.0, 2.0, d};
      break;
  }
  Batch x = sde::sample_initial(init, spec.generated_per_step, seed, 0x1717);

  // Each substep adds N(0, cov0); euler_step scales noise by sqrt(dt), so
  // feed it cov0^{1/2} / sqrt(dt).
  Mat root = spec.zero_noise ? Mat(d, d) : sym_sqrt(spec.cov0());
  for (double& v : root.a) v /= std::sqrt(spec.dt);
  sde::DriftFn drift = syn_drift(spec.kind, d);

  SyntheticData out;
  out.hidden.dim = d;
  out.hidden.provenance = "synthetic-hidden";
  out.observed_full.dim = d;
  out.observed_full.provenance = "synthetic";
  std::uint64_t substep = 0;
  for (int t = 0; t < spec.num_obs_times; ++t) {
    if (t > 0)
      for (int s = 0; s < spec.substeps; ++s)
        x = sde::euler_step(x, drift, root, spec.dt, rng::mix64(seed ^ 0xD1f),
                            substep++);
    out.hidden.times.push_back(t);
    out.hidden.batches.push_back(x);
    Batch y(d, x.count);
    for (std::size_t i = 0; i < x.count; ++i)
      for (int j = 0; j < d; ++j)
        y.row(i)[j] = syn_obs_map(spec.kind, x.row(i)[j]);
    out.observed_full.times.push_back(t);
    out.observed_full.batches.push_back(std::move(y));
  }
  out.observed = subsample(out.observed_full, spec.observed_per_step,
                           rng::mix64(seed ^ 0x0b5e));
  out.observed.provenance = "synthetic";
  return out;
}

// ---- CSV (header `t,dim_0,...,dim_{m-1}`) ----

inline void save_csv(const AggregateSeries& s, std::ostream& os) {
  os << "t";
  for (int j = 0; j < s.dim; ++j) os << ",dim_" << j;
  os << "\n";
  char buf[32];
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    const Batch& b = s.batches[k];
    for (std::size_t i = 0; i < b.count; ++i) {
      os << s.times[k];
      for (int j = 0; j < s.dim; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", b.row(i)[j]);
        os << "," << buf;
      }
      os << "\n";
    }
  }
}

inline void save_csv(const AggregateSeries& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_csv(s, os);
}

inline AggregateSeries load_csv(std::istream& is, const std::string& name) {
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(name + ": missing header row");
  if (line.rfind("t,dim_0", 0) != 0)
    throw std::runtime_error(name + ": bad header, expected t,dim_0,...");
  int dim = 0;
  for (char c : line)
    if (c == ',') ++dim;

  std::vector<std::pair<int, std::vector<double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    int t = -1;
    int field = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      const std::string cell = line.substr(pos, next - pos);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw std::runtime_error(name + ": non-numeric cell at line " +
                                 std::to_string(lineno));
      if (field == 0)
        t = static_cast<int>(v);
      else
        vals.push_back(v);
      ++field;
      pos = next + 1;
      if (next == line.size()) break;
    }
    if (static_cast<int>(vals.size()) != dim)
      throw std::runtime_error(name + ": ragged row at line " +
                               std::to_string(lineno) + " (expected " +
                               std::to_string(dim) + " value columns)");
    rows.emplace_back(t, std::move(vals));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  AggregateSeries out;
  out.dim = dim;
  out.provenance = name;
  for (const auto& [t, vals] : rows) {
    if (out.times.empty() || out.times.back() != t) {
      out.times.push_back(t);
      out.batches.emplace_back(dim, 0);
    }
    Batch& b = out.batches.back();
    b.count += 1;
    b.data.insert(b.data.end(), vals.begin(), vals.end());
  }
  return out;
}

inline AggregateSeries load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_csv(is, path);
}

}  // namespace legend::data
