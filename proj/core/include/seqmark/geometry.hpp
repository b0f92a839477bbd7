#pragma once

/**
 * Embedding-space geometry: cosine/angle arithmetic, seeded random-hyperplane
 * sets, d-bit LSH signatures, and the closed-form collision probability
 * (1 - theta/pi)^d for random-hyperplane hashing.
 *
 * Hyperplane normals are never stored or serialized; a HyperplaneSet is
 * reproduced bit-for-bit from {seed, d, h}.
 */

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seqmark/rng.hpp"

namespace seqmark {

using Embedding = std::vector<double>;

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& v);
Embedding subtract(const Embedding& a, const Embedding& b);
Embedding add(const Embedding& a, const Embedding& b);
Embedding scale(const Embedding& v, double factor);
bool all_finite(const Embedding& v);

// (a.b)/(|a||b|), clamped to [-1, 1]. Throws std::invalid_argument on
// dimension mismatch or zero-norm input.
double cosine_similarity(const Embedding& a, const Embedding& b);

// arccos of the clamped cosine, in [0, pi].
double angle_between(const Embedding& a, const Embedding& b);

/**
 * A d-bit region signature. `bits` is plane-order, first plane leftmost;
 * `value` is the base-2 reading of `bits`. d <= 63.
 */
struct Signature {
  std::string bits;
  std::uint64_t value = 0;

  std::size_t size() const { return bits.size(); }
  bool operator==(const Signature&) const = default;

  static Signature from_bits(std::string bits);
  static Signature from_value(std::uint64_t value, std::size_t d);
};

/**
 * d hyperplane normals drawn i.i.d. from N(0, I_h), fully determined by the
 * seed. Immutable after construction.
 */
struct HyperplaneSet {
  std::uint64_t seed = 0;
  std::size_t dim_d = 0;
  std::size_t embed_dim_h = 0;
  std::vector<Embedding> normals;

  static HyperplaneSet generate(std::uint64_t seed, std::size_t d, std::size_t h);

  // {"seed":..,"d":..,"h":..}; normals are regenerated, never stored.
  std::string to_json_text() const;
  static HyperplaneSet from_json_text(std::string_view text);
};

// Bit i = 1 iff normals[i].v >= 0 (a zero dot product maps to 1, so the
// signature is total and deterministic even for hand-built normals).
Signature lsh_signature(const Embedding& v, const HyperplaneSet& planes);

// Probability that two vectors at angle theta share all d hyperplane sides.
double collision_probability(double theta, std::size_t d);

}  // namespace seqmark
