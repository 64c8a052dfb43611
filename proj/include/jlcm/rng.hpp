#pragma once
// Deterministic, platform-independent random streams.
//
// Every consumer derives its own stream from (seed, purpose tag, index...)
// via splitmix64 mixing, so adding draws in one place never shifts the
// stream of another (chains, subjects, label sampling are all independent).

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "jlcm/util.hpp"

namespace jlcm {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fold an arbitrary list of words into one well-mixed 64-bit seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = 0x2545f4914f6cdd1dULL;
  for (std::uint64_t p : parts) {
    s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    (void)splitmix64(s);
  }
  return splitmix64(s);
}

// Stream purpose tags (keep stable: they define reproducibility of outputs).
namespace stream {
constexpr std::uint64_t kChain = 1;
constexpr std::uint64_t kSubject = 2;
constexpr std::uint64_t kLabels = 3;
constexpr std::uint64_t kInit = 4;
constexpr std::uint64_t kGeneric = 5;
}  // namespace stream

// xoshiro256++ with splitmix64 seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next() {
    std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (a, b) scale.
  double uniform(double a, double b) { return a + (b - a) * u01(); }

  // Standard normal via the polar method, spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mu, double sd) { return mu + sd * normal(); }

  // Exponential(1) by inversion.
  double expo() { return -std::log1p(-u01()); }

  bool bernoulli(double p) { return u01() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  // Draw an index from unnormalized log weights.
  int categorical_logw(const double* lw, int k) {
    double norm = logsumexp(lw, static_cast<std::size_t>(k));
    double u = u01();
    double acc = 0.0;
    for (int g = 0; g < k; ++g) {
      acc += std::exp(lw[g] - norm);
      if (u < acc) return g;
    }
    return k - 1;  // guard against accumulated rounding
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace jlcm
