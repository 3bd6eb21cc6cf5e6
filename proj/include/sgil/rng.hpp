#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace sgil {

// 64-bit FNV-1a. Used for stream derivation and for config digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// Deterministic seeded generator. The engine is mt19937_64 (bit-exact per
// the standard); the uniform/normal transforms are pinned here because the
// <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix(seed)) {}

  // Independent stream keyed by (seed, purpose, a, b). Every demo, epoch
  // shuffle, CEM call etc. derives its own stream so that consumers do not
  // perturb each other's draws.
  static Rng stream(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a64(purpose);
    h = fnv1a64(&seed, sizeof(seed), h);
    h = fnv1a64(&a, sizeof(a), h);
    h = fnv1a64(&b, sizeof(b), h);
    return Rng(h);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds, unbiased enough here
    return lo + static_cast<int>(uniform01() * (hi - lo + 1));
  }

  // Marsaglia polar method; the spare value is cached.
  double normal(double mu = 0.0, double sigma = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mu + sigma * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return mu + sigma * u * m;
  }

  double truncated_normal(double mu, double sigma, double lo, double hi) {
    if (sigma == 0.0) return std::min(hi, std::max(lo, mu));
    double x;
    do {
      x = normal(mu, sigma);
    } while (x < lo || x > hi);
    return x;
  }

  // Fisher-Yates over [0, n)
  template <class Vec>
  void shuffle(Vec& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform01() * i);
      std::swap(idx[i - 1], idx[j]);
    }
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sgil
