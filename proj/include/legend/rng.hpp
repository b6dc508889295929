#pragma once

#include <cmath>
#include <cstdint>

// Counter-based pseudo-random stream. Every draw is a pure function of
// (seed, key0, key1, counter), so sample i of a batch never depends on how
// many other samples were drawn. Gaussians via Box-Muller.
namespace legend::rng {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash4(std::uint64_t seed, std::uint64_t k0,
                           std::uint64_t k1, std::uint64_t ctr) {
  std::uint64_t h = mix64(seed ^ 0x2545f4914f6cdd1dULL);
  h = mix64(h ^ k0);
  h = mix64(h ^ k1);
  h = mix64(h ^ ctr);
  return h;
}

// Uniform in [0, 1), 53-bit resolution.
inline double u01(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1,
                  std::uint64_t ctr) {
  return static_cast<double>(hash4(seed, k0, k1, ctr) >> 11) * 0x1.0p-53;
}

// Single standard normal draw at a counter (cos branch of Box-Muller).
inline double gauss(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1,
                    std::uint64_t ctr) {
  const double u1 = 1.0 - u01(seed, k0, k1, 2 * ctr);      // (0, 1]
  const double u2 = u01(seed, k0, k1, 2 * ctr + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Sequential convenience wrapper over the keyed primitives.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t k0 = 0, std::uint64_t k1 = 0)
      : seed_(seed), k0_(k0), k1_(k1) {}

  double uniform() { return u01(seed_, k0_, k1_, ctr_++); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gauss() {
    const double u1 = 1.0 - u01(seed_, k0_, k1_, ctr_++);
    const double u2 = u01(seed_, k0_, k1_, ctr_++);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Derive an independent stream; deterministic in (this stream, salt).
  Stream fork(std::uint64_t salt) const {
    return Stream(mix64(seed_ ^ mix64(salt)), k0_, k1_);
  }

 private:
  std::uint64_t seed_, k0_, k1_;
  std::uint64_t ctr_ = 0;
};

}  // namespace legend::rng
