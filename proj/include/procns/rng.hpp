#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace procns {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Small PCG32 generator. All randomness in the toolkit flows through this so
// runs are reproducible independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next();
    state_ += splitmix64(seed);
    next();
  }

  uint32_t next() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31));
  }

  uint64_t next64() { return (static_cast<uint64_t>(next()) << 32) | next(); }

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(next()) * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint32_t below(uint32_t n) {
    if (n == 0) return 0;
    uint64_t m = static_cast<uint64_t>(next()) * n;
    return static_cast<uint32_t>(m >> 32);
  }

  int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<uint32_t>(hi - lo + 1))); }

  // Standard normal via Box-Muller; caches the second draw.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-12) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<uint32_t>(last - first);
    for (uint32_t i = n; i > 1; --i) {
      uint32_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Root-seed splitting scheme: every consumer derives its stream as
// rng_stream(root, "name") so adding consumers never perturbs existing ones.
inline Rng rng_stream(uint64_t root_seed, const std::string& name) {
  return Rng(splitmix64(root_seed ^ fnv1a64(name)), fnv1a64(name));
}

}  // namespace procns
