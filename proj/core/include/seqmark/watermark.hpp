#pragma once

/**
 * Generation-side watermarking.
 *
 * Sequence schemes share one rejection-sampling loop: derive the step's
 * valid-region set from (key, prompt digest, previous region), then draw
 * candidates at the emission temperature until one lands in a valid region
 * or the rejection budget runs out, in which case the last candidate is
 * emitted and the step is recorded as unwatermarked. They differ in the
 * region assigner (LSH signature vs nearest centroid) and in the embedding
 * transform applied before hashing:
 *
 *   SeqMark    LSH over mean-centered embeddings (configurable transform)
 *   SemStamp   LSH over raw embeddings
 *   KSemStamp  nearest centroid, keyed valid-centroid subset per step
 *
 * The region chain always hashes the RAW embedding of the emitted sentence;
 * only the acceptance check sees the transformed one.
 *
 * Token schemes bias per-step green lists (KGW), optionally gated on
 * next-token entropy (SWEET).
 *
 * Everything is a pure function of (config, prompt): hyperplanes derive from
 * the key, candidate seeds from (key, prompt digest, step, attempt), manifold
 * draws from mean_draw_seed. Detection replays the identical streams.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "seqmark/partition.hpp"
#include "seqmark/samplers.hpp"
#include "seqmark/transform.hpp"

namespace seqmark {

enum class Scheme { SeqMark, SemStamp, KSemStamp, KGW, SWEET };

const char* to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);

struct WatermarkConfig {
  Scheme scheme = Scheme::SeqMark;
  SecretKey key{1};
  double gamma = 0.25;

  // Sequence schemes.
  std::size_t lsh_dim = 3;           // d
  std::size_t centroid_count = 8;    // K (KSemStamp)
  std::size_t max_rejections = 16;   // candidate budget per sentence
  std::size_t manifold_samples = 50; // n (SeqMark mean estimation)
  double emit_temperature = 1.0;
  double mean_temperature = 1.0;
  TransformSpec transform = TransformSpec::sample_mean();
  bool emit_best_rejected = false;   // fallback picks best-quality reject

  // Token schemes.
  double delta_bias = 2.0;
  double entropy_threshold = 0.69;   // SWEET gate, nats

  // Detection rule for M >= 2.
  double z_threshold = 2.0;

  void validate() const;
  std::string to_json_text() const;
  std::uint64_t digest() const;
};

struct StepRecord {
  std::uint64_t region = 0;
  std::string region_bits;       // empty for centroid schemes
  bool valid = false;
  std::uint32_t rejections_used = 0;
  double quality = 0.0;
  bool degenerate = false;       // transform landed on the zero vector
};

struct GenerationResult {
  std::string prompt;
  std::vector<std::string> sentences;
  std::vector<StepRecord> per_step;
  std::uint64_t config_digest = 0;
};

struct TokenGenerationResult {
  std::string prompt;
  std::vector<int> tokens;
  std::vector<std::uint8_t> green;     // per-token color
  std::vector<std::uint8_t> biased;    // per-token: bias applied this step
  double mean_logprob = 0.0;
  std::uint64_t config_digest = 0;
};

// Seed roots; exposed so tests can replay individual streams.
std::uint64_t hyperplane_seed(SecretKey key);
std::uint64_t emission_seed(SecretKey key, std::uint64_t prompt_digest,
                            std::uint64_t step, std::uint64_t attempt);
std::uint64_t token_stream_seed(SecretKey key, std::uint64_t prompt_digest);

// Transform actually applied by a scheme (SemStamp pins Identity).
TransformSpec effective_transform(const WatermarkConfig& cfg);

GenerationResult generate_seqmark(const std::string& prompt, std::size_t T,
                                  const WatermarkConfig& cfg,
                                  const CandidateSource& sampler,
                                  const MeanProvider& mean_provider);

GenerationResult generate_semstamp(const std::string& prompt, std::size_t T,
                                   const WatermarkConfig& cfg,
                                   const CandidateSource& sampler);

GenerationResult generate_ksemstamp(const std::string& prompt, std::size_t T,
                                    const WatermarkConfig& cfg,
                                    const CandidateSource& sampler,
                                    const std::vector<Embedding>& centroids);

TokenGenerationResult generate_kgw(const std::string& prompt,
                                   std::size_t T_tokens,
                                   const WatermarkConfig& cfg,
                                   const TokenModel& model);

TokenGenerationResult generate_sweet(const std::string& prompt,
                                     std::size_t T_tokens,
                                     const WatermarkConfig& cfg,
                                     const TokenModel& model);

}  // namespace seqmark
