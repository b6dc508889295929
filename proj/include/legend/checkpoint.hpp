#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "legend/nn.hpp"

// Self-describing text checkpoint container. Parameters are written in
// decimal with 17 significant digits, which round-trips IEEE doubles
// exactly; save -> load -> save is byte-identical.
namespace legend::nn {

struct Checkpoint {
  static constexpr int kVersion = 1;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Network>> mlps;
  std::vector<std::pair<std::string, RecurrentNetwork>> lstms;

  const Network& mlp(const std::string& name) const {
    for (const auto& [n, net] : mlps)
      if (n == name) return net;
    throw std::runtime_error("checkpoint: no mlp named " + name);
  }
  const RecurrentNetwork& lstm(const std::string& name) const {
    for (const auto& [n, net] : lstms)
      if (n == name) return net;
    throw std::runtime_error("checkpoint: no lstm named " + name);
  }
  std::string meta_value(const std::string& key, std::string dflt = "") const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return dflt;
  }
};

namespace detail {
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void checkpoint_save(const Checkpoint& ck, std::ostream& os) {
  os << "LEGEND-CKPT " << Checkpoint::kVersion << "\n";
  for (const auto& [k, v] : ck.meta) os << "meta " << k << " " << v << "\n";
  for (const auto& [name, net] : ck.mlps) {
    os << "mlp " << name << "\n";
    os << "sizes " << net.sizes.size();
    for (int s : net.sizes) os << " " << s;
    os << "\n";
    os << "acts " << net.acts.size();
    for (Act a : net.acts) os << " " << act_name(a);
    os << "\n";
    os << "params " << net.params.size() << "\n";
    for (double p : net.params) os << detail::fmt17(p) << "\n";
  }
  for (const auto& [name, net] : ck.lstms) {
    os << "lstm " << name << "\n";
    os << "dims " << net.in_dim << " " << net.hidden << " " << net.out_dim
       << "\n";
    os << "params " << net.params.size() << "\n";
    for (double p : net.params) os << detail::fmt17(p) << "\n";
  }
  os << "end\n";
}

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  std::ostringstream os;
  checkpoint_save(ck, os);
  return os.str();
}

inline Checkpoint checkpoint_load(std::istream& is) {
  Checkpoint ck;
  std::string tag;
  int version = -1;
  if (!(is >> tag >> version) || tag != "LEGEND-CKPT")
    throw std::runtime_error("checkpoint: bad header");
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  auto read_params = [&](std::vector<double>& out) {
    std::string kw;
    std::size_t n = 0;
    if (!(is >> kw >> n) || kw != "params")
      throw std::runtime_error("checkpoint: expected params block");
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      if (!(is >> out[i]))
        throw std::runtime_error("checkpoint: truncated parameter block");
  };
  std::string kind;
  bool ended = false;
  while (is >> kind) {
    if (kind == "end") {
      ended = true;
      break;
    }
    if (kind == "meta") {
      std::string k, v;
      if (!(is >> k >> v)) throw std::runtime_error("checkpoint: bad meta");
      ck.meta.emplace_back(k, v);
    } else if (kind == "mlp") {
      std::string name, kw;
      std::size_t n = 0;
      Network net;
      if (!(is >> name)) throw std::runtime_error("checkpoint: bad mlp");
      if (!(is >> kw >> n) || kw != "sizes")
        throw std::runtime_error("checkpoint: expected sizes");
      net.sizes.resize(n);
      for (auto& s : net.sizes)
        if (!(is >> s)) throw std::runtime_error("checkpoint: bad sizes");
      if (!(is >> kw >> n) || kw != "acts")
        throw std::runtime_error("checkpoint: expected acts");
      net.acts.resize(n);
      for (auto& a : net.acts) {
        std::string an;
        if (!(is >> an)) throw std::runtime_error("checkpoint: bad acts");
        a = act_from_name(an);
      }
      read_params(net.params);
      ck.mlps.emplace_back(name, std::move(net));
    } else if (kind == "lstm") {
      std::string name, kw;
      RecurrentNetwork net;
      if (!(is >> name >> kw >> net.in_dim >> net.hidden >> net.out_dim) ||
          kw != "dims")
        throw std::runtime_error("checkpoint: bad lstm header");
      read_params(net.params);
      ck.lstms.emplace_back(name, std::move(net));
    } else {
      throw std::runtime_error("checkpoint: unknown record '" + kind + "'");
    }
  }
  if (!ended) throw std::runtime_error("checkpoint: missing end marker");
  return ck;
}

inline Checkpoint checkpoint_from_string(const std::string& s) {
  std::istringstream is(s);
  return checkpoint_load(is);
}

}  // namespace legend::nn
