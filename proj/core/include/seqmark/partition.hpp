#pragma once

/**
 * Keyed pseudorandom valid/blocked partitions.
 *
 * A step's partition seed is derived from (secret key, prompt digest,
 * previous region) with the splitmix64 finalizer:
 *
 *     seed = mix64(key ^ mix64(prompt_digest) ^ mix64(prev_region + 1))
 *
 * The +1 keeps the virtual step-0 region (value 0) away from mix64's zero
 * fixed point. The prompt digest is 64-bit FNV-1a over the prompt's UTF-8
 * bytes. Given a seed, the valid set is the first floor(gamma * count)
 * elements of the seeded Fisher-Yates shuffle of [0, count) - the same rule
 * covers 2^d LSH regions, K centroids, and vocabulary green lists.
 */

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seqmark/geometry.hpp"

namespace seqmark {

struct SecretKey {
  std::uint64_t value = 0;
  bool operator==(const SecretKey&) const = default;
};

std::uint64_t derive_step_seed(SecretKey key, std::uint64_t prompt_digest,
                               std::uint64_t prev_region);
std::uint64_t derive_step_seed(SecretKey key, std::uint64_t prompt_digest,
                               const Signature& prev_signature);

// First floor(gamma * count) indices of the seeded shuffle of [0, count),
// in shuffle order. Requires 1 <= floor(gamma * count) < count.
std::vector<std::uint64_t> partition_choice(std::uint64_t seed,
                                            std::uint64_t count, double gamma);

// Membership bitmap over [0, count) for the same choice.
std::vector<std::uint8_t> partition_mask(std::uint64_t seed,
                                         std::uint64_t count, double gamma);

/// Valid/blocked split of the 2^d signature space.
struct RegionPartition {
  std::size_t d = 0;
  double gamma = 0.0;
  std::uint64_t derivation_seed = 0;
  std::vector<std::uint8_t> valid_mask;   // size 2^d
  std::vector<std::uint64_t> valid_set;   // sorted

  static RegionPartition make(std::uint64_t seed, std::size_t d, double gamma);

  std::size_t region_count() const { return valid_mask.size(); }
  std::size_t valid_count() const { return valid_set.size(); }
  // floor(gamma * 2^d) / 2^d: the exact chance rate of is_valid under a
  // partition-independent signature.
  double gamma_eff() const;
  bool is_valid(const Signature& sig) const;

  std::string to_json_text() const;
  static RegionPartition from_json_text(std::string_view text);
};

/// Fitted centroids plus a keyed valid subset (k-SemStamp regions).
struct CentroidPartition {
  std::vector<Embedding> centroids;
  double gamma = 0.0;
  std::uint64_t derivation_seed = 0;
  std::vector<std::uint8_t> valid_mask;       // size K
  std::vector<std::uint32_t> valid_centroids; // sorted

  static CentroidPartition make(std::vector<Embedding> centroids,
                                std::uint64_t seed, double gamma);

  std::size_t centroid_count() const { return centroids.size(); }
  double gamma_eff() const;

  std::string to_json_text() const;
  // Centroids are data, not derivable from the seed, so they are serialized.
  static CentroidPartition from_json_text(std::string_view text);
};

struct RegionAssignment {
  std::size_t index = 0;
  bool valid = false;
};

// Nearest centroid by Euclidean distance, ties to the lowest index.
std::size_t nearest_centroid(const Embedding& v,
                             const std::vector<Embedding>& centroids);
RegionAssignment assign_centroid_region(const Embedding& v,
                                        const CentroidPartition& part);

/**
 * Lloyd's iterations with seeded init: a uniform sample of K points,
 * preferring pairwise-distinct values. An empty cluster is reseeded to the
 * point farthest from its assigned centroid. Stops when the largest centroid
 * shift drops below `tol` or after `max_iters` rounds.
 */
std::vector<Embedding> fit_centroids(const std::vector<Embedding>& points,
                                     std::size_t k, std::uint64_t seed,
                                     std::size_t max_iters = 64,
                                     double tol = 1e-9);

}  // namespace seqmark
