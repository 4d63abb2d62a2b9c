#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace tvlab {

/// Deterministic random source. Built on std::mt19937 (whose output stream
/// is fully specified by the standard) with hand-rolled distributions, so
/// identical seeds produce identical streams on every platform/toolchain.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  uint32_t next_u32() { return gen_(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int uniform_int(int n) {
    const uint32_t un = static_cast<uint32_t>(n);
    const uint32_t limit = UINT32_MAX - UINT32_MAX % un;
    uint32_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return static_cast<int>(r % un);
  }

  /// Uniform double in [0, 1).
  double uniform01() {
    return static_cast<double>(gen_()) * (1.0 / 4294967296.0);
  }

  /// Standard normal via Box-Muller (explicit, for cross-platform replay).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 1e-12);
    u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive per-step / per-episode seeds from a
/// named root seed without correlated streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over bytes; used to hash task names and demonstration sets into
/// seed material (std::hash is not portable across implementations).
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a_str(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace tvlab
