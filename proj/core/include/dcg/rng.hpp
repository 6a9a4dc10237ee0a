#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dcg {

// FNV-1a over arbitrary bytes; used for schema hashing and RNG stream
// derivation.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64_u64(uint64_t v, uint64_t h = 0xcbf29ce484222325ull) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

// SplitMix64 generator. Hand-rolled (instead of <random>) so that streams
// are identical across standard-library versions and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (first branch only, no cached spare).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent deterministic stream for a named purpose.
  Rng fork(std::string_view tag) const {
    return Rng(fnv1a64(tag, fnv1a64_u64(state_)));
  }

 private:
  uint64_t state_;
};

// Deterministic per-(seed, tag, indices) stream; lets sample generation be
// order-independent.
inline Rng stream_rng(uint64_t seed, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = fnv1a64_u64(seed);
  h = fnv1a64(tag, h);
  h = fnv1a64_u64(a, h);
  h = fnv1a64_u64(b, h);
  return Rng(h);
}

}  // namespace dcg
