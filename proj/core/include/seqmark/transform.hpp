#pragma once

/**
 * Embedding transforms applied before region assignment.
 *
 * The production transform subtracts the sample mean of a drawn candidate
 * set, which spreads tightly clustered candidates across LSH regions. The
 * remaining kinds are ablation variants: subtract a fixed random vector, the
 * candidate closest to the mean, the first-drawn candidate, a caller-supplied
 * source/target embedding, or nothing.
 *
 * A transform that lands exactly on the zero vector has no signature; that
 * is reported as std::nullopt and callers treat it as a rejection, never as
 * a valid region.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqmark/geometry.hpp"

namespace seqmark {

enum class TransformKind {
  SampleMean,
  RandomEmbedding,
  ClosestToMean,
  SingleSample,
  SourceEmbedding,
  TargetEmbedding,
  Identity,
};

const char* to_string(TransformKind kind);
TransformKind transform_kind_from_string(std::string_view name);

struct TransformSpec {
  TransformKind kind = TransformKind::SampleMean;
  std::optional<Embedding> aux;        // Source/Target kinds
  std::optional<std::uint64_t> aux_seed;  // RandomEmbedding kind

  static TransformSpec sample_mean() { return {TransformKind::SampleMean, {}, {}}; }
  static TransformSpec identity() { return {TransformKind::Identity, {}, {}}; }
  static TransformSpec random_embedding(std::uint64_t seed) {
    return {TransformKind::RandomEmbedding, {}, seed};
  }
  static TransformSpec closest_to_mean() { return {TransformKind::ClosestToMean, {}, {}}; }
  static TransformSpec single_sample() { return {TransformKind::SingleSample, {}, {}}; }
  static TransformSpec source_embedding(Embedding aux) {
    return {TransformKind::SourceEmbedding, std::move(aux), {}};
  }
  static TransformSpec target_embedding(Embedding aux) {
    return {TransformKind::TargetEmbedding, std::move(aux), {}};
  }

  // aux present exactly when the kind requires it; throws otherwise.
  void validate() const;

  std::string to_json_text() const;
  static TransformSpec from_json_text(std::string_view text);
};

/// Candidate embeddings drawn from the high-likelihood manifold, in draw order.
struct CandidateSet {
  std::vector<Embedding> members;

  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }
};

// Componentwise arithmetic mean; throws on an empty set.
Embedding sample_mean(const CandidateSet& c);

// The vector subtracted by `spec` given candidate set `c`. For
// RandomEmbedding the offset is drawn once from aux_seed (dimension `h`)
// and is the same for every candidate of the step.
Embedding transform_offset(const TransformSpec& spec, const CandidateSet& c,
                           std::size_t h);

// c - z, or std::nullopt when the difference is exactly zero in every
// component (signature undefined).
std::optional<Embedding> subtract_checked(const Embedding& c, const Embedding& z);

std::optional<Embedding> apply_transform(const Embedding& c,
                                         const TransformSpec& spec,
                                         const CandidateSet& set);

// u_i = c_i - mean(c); requires n >= 2. The output mean is the zero vector
// up to accumulated rounding.
CandidateSet mean_center_set(const CandidateSet& c);

}  // namespace seqmark
