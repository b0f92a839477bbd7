#pragma once

/**
 * Candidate sources.
 *
 * Generation and detection both consume a CandidateSource: generation draws
 * candidates from it, detection re-embeds query text and re-draws manifold
 * samples through the same interface. Samplers are stateless; every draw is
 * parameterized by an explicit seed, so concurrent draws with distinct seeds
 * never share PRNG state.
 *
 * ClusterModel is a synthetic stand-in for a task's output distribution: a
 * mixture of unit directions mu_k with weights w_k and residual caps
 * delta_k. A draw picks cluster k with probability proportional to
 * w_k^(1/tau), then returns mu_k plus an isotropic residual norm-clipped to
 * delta_k * |mu_k|. Candidate text is "c<cluster>:s<seed-hex>", and the
 * model's encoder maps that text back to the identical embedding, which
 * keeps detection-side re-embedding exact.
 */

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seqmark/geometry.hpp"
#include "seqmark/partition.hpp"
#include "seqmark/transform.hpp"

namespace seqmark {

struct Candidate {
  std::string text;
  Embedding embedding;
  double quality = 0.0;  // model-defined proxy, higher is better
  std::optional<std::uint32_t> cluster_id;
};

class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual Candidate sample(double temperature, std::uint64_t seed) const = 0;
  virtual Embedding embed(const std::string& text) const = 0;
  virtual std::size_t embed_dim() const = 0;
  // True when the conditional output distribution depends on generated
  // history; stationary synthetic models return false and the pipeline
  // reuses the step-0 manifold mean.
  virtual bool history_dependent() const { return false; }
};

struct ClusterSpec {
  Embedding direction;      // normalized on construction
  double weight = 1.0;      // > 0; normalized to sum 1 at tau = 1
  double residual_delta = 0.0;  // in [0, 1)
};

class ClusterModel final : public CandidateSource {
 public:
  ClusterModel(std::size_t h, std::vector<ClusterSpec> clusters);

  Candidate sample(double temperature, std::uint64_t seed) const override;
  Embedding embed(const std::string& text) const override;
  std::size_t embed_dim() const override { return h_; }

  std::size_t cluster_count() const { return clusters_.size(); }
  const ClusterSpec& cluster(std::size_t i) const { return clusters_[i]; }

  // mu_k plus the seeded clipped residual; the embedding a draw with this
  // (cluster, seed) pair carries, independent of temperature.
  Embedding embedding_for(std::uint32_t cluster, std::uint64_t seed) const;

  static std::string encode_text(std::uint32_t cluster, std::uint64_t seed);
  static std::pair<std::uint32_t, std::uint64_t> parse_text(const std::string& text);

 private:
  std::uint32_t pick_cluster(double temperature, Rng& rng) const;

  std::size_t h_;
  std::vector<ClusterSpec> clusters_;
};

/**
 * Synthetic autoregressive token model. `base_logits` maps a prefix to raw
 * logits over the vocabulary; `entropy_knob` flattens them as
 * logits / (1 + knob), so knob = 0 is the base model and knob -> inf is
 * uniform.
 */
struct TokenModel {
  std::size_t vocab_size = 0;
  double entropy_knob = 0.0;
  std::function<std::vector<double>(const std::vector<int>&)> base_logits;

  std::vector<double> logits(const std::vector<int>& prefix) const;
};

// Shannon entropy (nats) of the next-token distribution at `temperature`.
double token_entropy(const TokenModel& model, const std::vector<int>& prefix,
                     double temperature);

/**
 * Keyed green-list bias. The green list at step t is partition_choice of the
 * vocabulary seeded by derive_step_seed(key, prompt_digest, prev_token); the
 * first step uses the virtual previous region 0. With an entropy threshold
 * set, the bias applies only at steps whose next-token entropy reaches it.
 */
struct TokenBias {
  SecretKey key;
  std::uint64_t prompt_digest = 0;
  double gamma = 0.25;
  double delta_bias = 2.0;
  std::optional<double> entropy_threshold;
};

struct TokenSequence {
  std::vector<int> tokens;
  std::vector<std::uint8_t> green;   // per-step color (biased runs only)
  std::vector<std::uint8_t> biased;  // per-step: was the bias applied
  double mean_logprob = 0.0;         // under the unbiased model at tau = 1
};

TokenSequence sample_token_sequence(const TokenModel& model, std::size_t length,
                                    double temperature,
                                    const std::optional<TokenBias>& bias,
                                    std::uint64_t seed);

// Seed for the i-th manifold draw of a step; keyed so that detection can
// reproduce the mean but an observer without the key cannot.
std::uint64_t mean_draw_seed(SecretKey key, std::uint64_t prompt_digest,
                             std::uint64_t step, std::uint64_t index);

/**
 * Source of the manifold mean subtracted by the transform. ResampleOracle
 * re-draws n candidates with key-derived seeds and averages them (identical
 * at generation and detection time). FixedVector serves precomputed means
 * per (prompt digest, step) - the hook a trained mean predictor would fill.
 */
class MeanProvider {
 public:
  enum class Mode { ResampleOracle, FixedVector };

  static MeanProvider resample_oracle(SecretKey key);
  static MeanProvider fixed_vectors(
      std::map<std::pair<std::uint64_t, std::uint64_t>, Embedding> table);

  Mode mode() const { return mode_; }

  Embedding provide(std::uint64_t prompt_digest, std::uint64_t step,
                    std::size_t n, const CandidateSource& sampler,
                    double temperature) const;

  // The underlying candidate set (oracle mode only); needed by transform
  // variants that subtract a member rather than the mean.
  CandidateSet provide_set(std::uint64_t prompt_digest, std::uint64_t step,
                           std::size_t n, const CandidateSource& sampler,
                           double temperature) const;

 private:
  MeanProvider() = default;
  Mode mode_ = Mode::ResampleOracle;
  SecretKey key_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, Embedding> table_;
};

}  // namespace seqmark
