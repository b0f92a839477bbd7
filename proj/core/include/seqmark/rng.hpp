#pragma once

/**
 * Deterministic randomness primitives.
 *
 * Every stochastic component in this library draws from an explicitly seeded
 * stream, so that a (key, prompt, step) tuple reproduces the same bytes on
 * any platform. Three building blocks:
 *
 *   - mix64:   the splitmix64 avalanche finalizer, used as the keyed mixer
 *              for seed derivation (constants below).
 *   - fnv1a64: 64-bit FNV-1a over raw bytes, used for prompt digests and
 *              config digests.
 *   - Rng:     std::mt19937_64 (output sequence fixed by the standard) with
 *              our own variate transforms: 53-bit uniform doubles, Box-Muller
 *              normals (cosine branch, two words per draw), and unbiased
 *              bounded integers via rejection. No std::*_distribution is
 *              used anywhere; their algorithms are implementation-defined.
 */

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace seqmark {

// splitmix64 finalizer (Steele, Lea, Flood 2014). mix64(0) == 0.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// FNV-1a, 64-bit: offset 0xcbf29ce484222325, prime 0x100000001b3.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Folds labeled components into one seed; each component is avalanched
// before mixing so that low-entropy inputs (small counters) still flip
// about half the output bits.
inline std::uint64_t seed_seq(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = 0x243f6a8885a308d3ull;  // arbitrary nonzero start
  for (std::uint64_t p : parts) {
    s = mix64(s ^ mix64(p + 0x9e3779b97f4a7c15ull));
  }
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller, cosine branch. Consumes exactly two
  // words per call; the sine mate is discarded to keep the draw count
  // independent of call history.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1], log-safe
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return r * std::cos(two_pi * u2);
  }

  // Uniform in [0, n); unbiased via rejection of the wraparound band.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<double> normal_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace seqmark
