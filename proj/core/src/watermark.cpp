#include "seqmark/watermark.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace seqmark {

namespace {

constexpr std::uint64_t kPlanesTag = 0x504c414e4553ull;  // "PLANES"
constexpr std::uint64_t kEmitTag = 0x454d4954ull;        // "EMIT"
constexpr std::uint64_t kTokenTag = 0x544f4b454eull;     // "TOKEN"

StepRecord make_step_record(const Signature& sig, bool valid,
                            std::uint32_t rejections_used, double quality,
                            bool degenerate) {
  return StepRecord{sig.value, sig.bits, valid, rejections_used, quality,
                    degenerate};
}

// Offset subtracted at step t. Identity and Source/Target never touch the
// provider; SampleMean works in both provider modes; set-based variants need
// the oracle's candidate set.
Embedding step_offset(const WatermarkConfig& cfg, const TransformSpec& spec,
                      std::uint64_t prompt_digest, std::uint64_t mean_step,
                      const CandidateSource& sampler,
                      const MeanProvider* provider, std::size_t h) {
  switch (spec.kind) {
    case TransformKind::Identity:
      return Embedding(h, 0.0);
    case TransformKind::SourceEmbedding:
    case TransformKind::TargetEmbedding:
      return transform_offset(spec, CandidateSet{}, h);
    case TransformKind::RandomEmbedding: {
      // One fixed offset per step, re-derivable at detection time.
      TransformSpec per_step = spec;
      per_step.aux_seed = seed_seq({*spec.aux_seed, mean_step});
      return transform_offset(per_step, CandidateSet{}, h);
    }
    case TransformKind::SampleMean:
      if (!provider) throw std::invalid_argument("sample_mean transform needs a mean provider");
      return provider->provide(prompt_digest, mean_step, cfg.manifold_samples,
                               sampler, cfg.mean_temperature);
    case TransformKind::ClosestToMean:
    case TransformKind::SingleSample: {
      if (!provider) throw std::invalid_argument("set-based transform needs a mean provider");
      const CandidateSet set = provider->provide_set(
          prompt_digest, mean_step, cfg.manifold_samples, sampler,
          cfg.mean_temperature);
      return transform_offset(spec, set, h);
    }
  }
  throw std::logic_error("unreachable transform kind");
}

GenerationResult generate_sequence(const std::string& prompt, std::size_t T,
                                   const WatermarkConfig& cfg,
                                   const CandidateSource& sampler,
                                   const MeanProvider* provider,
                                   const std::vector<Embedding>* centroids) {
  cfg.validate();
  if (T == 0) throw std::invalid_argument("generate: T must be >= 1");

  const std::uint64_t digest = fnv1a64(prompt);
  const std::size_t h = sampler.embed_dim();
  const bool centroid_scheme = cfg.scheme == Scheme::KSemStamp;
  const TransformSpec spec = effective_transform(cfg);

  HyperplaneSet planes;
  if (!centroid_scheme) {
    planes = HyperplaneSet::generate(hyperplane_seed(cfg.key), cfg.lsh_dim, h);
  }

  GenerationResult result;
  result.prompt = prompt;
  result.config_digest = cfg.digest();
  result.sentences.reserve(T);
  result.per_step.reserve(T);

  std::uint64_t prev_region = 0;  // virtual step-0 region
  for (std::size_t t = 0; t < T; ++t) {
    const std::uint64_t step_seed = derive_step_seed(cfg.key, digest, prev_region);

    RegionPartition region_part;
    CentroidPartition centroid_part;
    if (centroid_scheme) {
      centroid_part = CentroidPartition::make(*centroids, step_seed, cfg.gamma);
    } else {
      region_part = RegionPartition::make(step_seed, cfg.lsh_dim, cfg.gamma);
    }

    Embedding offset;
    if (!centroid_scheme) {
      const std::uint64_t mean_step = sampler.history_dependent() ? t : 0;
      offset = step_offset(cfg, spec, digest, mean_step, sampler, provider, h);
    }

    Candidate emitted;
    StepRecord record;
    Candidate best_reject;
    StepRecord best_reject_record;
    double best_reject_quality = -std::numeric_limits<double>::infinity();

    for (std::uint32_t attempt = 1; attempt <= cfg.max_rejections; ++attempt) {
      Candidate cand = sampler.sample(
          cfg.emit_temperature, emission_seed(cfg.key, digest, t, attempt));

      StepRecord rec;
      if (centroid_scheme) {
        const auto assign = assign_centroid_region(cand.embedding, centroid_part);
        rec = StepRecord{assign.index, "", assign.valid, attempt - 1,
                         cand.quality, false};
      } else {
        const auto centered = subtract_checked(cand.embedding, offset);
        if (!centered) {
          rec = make_step_record(Signature::from_value(0, cfg.lsh_dim), false,
                                 attempt - 1, cand.quality, true);
        } else {
          const Signature sig = lsh_signature(*centered, planes);
          rec = make_step_record(sig, region_part.is_valid(sig), attempt - 1,
                                 cand.quality, false);
        }
      }

      if (rec.valid) {
        emitted = std::move(cand);
        record = rec;
        break;
      }
      if (cfg.emit_best_rejected && cand.quality > best_reject_quality) {
        best_reject_quality = cand.quality;
        best_reject = cand;
        best_reject_record = rec;
      }
      if (attempt == cfg.max_rejections) {
        // Budget exhausted: emit the last candidate (or the best reject).
        if (cfg.emit_best_rejected) {
          emitted = std::move(best_reject);
          record = best_reject_record;
        } else {
          emitted = std::move(cand);
          record = rec;
        }
        record.rejections_used = static_cast<std::uint32_t>(cfg.max_rejections);
        record.valid = false;
      }
    }

    // Chain the next partition off the raw embedding of what was emitted.
    prev_region = centroid_scheme
                      ? nearest_centroid(emitted.embedding, *centroids)
                      : lsh_signature(emitted.embedding, planes).value;

    result.sentences.push_back(emitted.text);
    result.per_step.push_back(std::move(record));
  }
  return result;
}

TokenGenerationResult generate_tokens(const std::string& prompt,
                                      std::size_t T_tokens,
                                      const WatermarkConfig& cfg,
                                      const TokenModel& model,
                                      std::optional<double> entropy_threshold) {
  cfg.validate();
  const std::uint64_t digest = fnv1a64(prompt);
  TokenBias bias{cfg.key, digest, cfg.gamma, cfg.delta_bias, entropy_threshold};
  const TokenSequence seq =
      sample_token_sequence(model, T_tokens, cfg.emit_temperature, bias,
                            token_stream_seed(cfg.key, digest));
  TokenGenerationResult result;
  result.prompt = prompt;
  result.tokens = seq.tokens;
  result.green = seq.green;
  result.biased = seq.biased;
  result.mean_logprob = seq.mean_logprob;
  result.config_digest = cfg.digest();
  return result;
}

}  // namespace

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::SeqMark: return "SeqMark";
    case Scheme::SemStamp: return "SemStamp";
    case Scheme::KSemStamp: return "KSemStamp";
    case Scheme::KGW: return "KGW";
    case Scheme::SWEET: return "SWEET";
  }
  return "unknown";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "SeqMark") return Scheme::SeqMark;
  if (name == "SemStamp") return Scheme::SemStamp;
  if (name == "KSemStamp") return Scheme::KSemStamp;
  if (name == "KGW") return Scheme::KGW;
  if (name == "SWEET") return Scheme::SWEET;
  throw std::invalid_argument("unknown scheme: " + std::string(name));
}

void WatermarkConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("config: gamma must be in (0, 1)");
  }
  if (!(emit_temperature > 0.0) || !(mean_temperature > 0.0)) {
    throw std::invalid_argument("config: temperatures must be > 0");
  }
  const bool sequence_scheme = scheme == Scheme::SeqMark ||
                               scheme == Scheme::SemStamp ||
                               scheme == Scheme::KSemStamp;
  if (sequence_scheme) {
    if (max_rejections == 0) {
      throw std::invalid_argument("config: max_rejections must be >= 1");
    }
    if (scheme == Scheme::KSemStamp) {
      if (centroid_count < 2) {
        throw std::invalid_argument("config: KSemStamp needs K >= 2");
      }
      const auto valid = static_cast<std::size_t>(
          std::floor(gamma * static_cast<double>(centroid_count)));
      if (valid == 0 || valid >= centroid_count) {
        throw std::invalid_argument("config: floor(gamma * K) must be in [1, K)");
      }
    } else {
      if (lsh_dim == 0 || lsh_dim > 20) {
        throw std::invalid_argument("config: lsh_dim must be in [1, 20]");
      }
      const double regions = std::pow(2.0, static_cast<double>(lsh_dim));
      const auto valid = static_cast<std::size_t>(std::floor(gamma * regions));
      if (valid == 0 || valid >= static_cast<std::size_t>(regions)) {
        throw std::invalid_argument(
            "config: floor(gamma * 2^d) must leave both valid and blocked regions");
      }
    }
    if (scheme == Scheme::SeqMark) {
      effective_transform(*this).validate();
      if (manifold_samples < 2) {
        throw std::invalid_argument("config: SeqMark needs manifold_samples >= 2");
      }
    }
  } else {
    if (delta_bias < 0.0) {
      throw std::invalid_argument("config: delta_bias must be >= 0");
    }
    if (scheme == Scheme::SWEET && std::isnan(entropy_threshold)) {
      throw std::invalid_argument("config: SWEET needs an entropy threshold");
    }
  }
}

std::string WatermarkConfig::to_json_text() const {
  nlohmann::json j{{"scheme", to_string(scheme)},
                   {"key", key.value},
                   {"gamma", gamma},
                   {"lsh_dim", lsh_dim},
                   {"centroid_count", centroid_count},
                   {"max_rejections", max_rejections},
                   {"manifold_samples", manifold_samples},
                   {"emit_temperature", emit_temperature},
                   {"mean_temperature", mean_temperature},
                   {"transform", nlohmann::json::parse(transform.to_json_text())},
                   {"emit_best_rejected", emit_best_rejected},
                   {"delta_bias", delta_bias},
                   {"entropy_threshold", entropy_threshold},
                   {"z_threshold", z_threshold}};
  return j.dump();
}

std::uint64_t WatermarkConfig::digest() const { return fnv1a64(to_json_text()); }

std::uint64_t hyperplane_seed(SecretKey key) {
  return seed_seq({kPlanesTag, key.value});
}

std::uint64_t emission_seed(SecretKey key, std::uint64_t prompt_digest,
                            std::uint64_t step, std::uint64_t attempt) {
  return seed_seq({kEmitTag, key.value, prompt_digest, step, attempt});
}

std::uint64_t token_stream_seed(SecretKey key, std::uint64_t prompt_digest) {
  return seed_seq({kTokenTag, key.value, prompt_digest});
}

TransformSpec effective_transform(const WatermarkConfig& cfg) {
  if (cfg.scheme == Scheme::SemStamp) return TransformSpec::identity();
  return cfg.transform;
}

GenerationResult generate_seqmark(const std::string& prompt, std::size_t T,
                                  const WatermarkConfig& cfg,
                                  const CandidateSource& sampler,
                                  const MeanProvider& mean_provider) {
  if (cfg.scheme != Scheme::SeqMark) {
    throw std::invalid_argument("generate_seqmark: config scheme is not SeqMark");
  }
  return generate_sequence(prompt, T, cfg, sampler, &mean_provider, nullptr);
}

GenerationResult generate_semstamp(const std::string& prompt, std::size_t T,
                                   const WatermarkConfig& cfg,
                                   const CandidateSource& sampler) {
  if (cfg.scheme != Scheme::SemStamp) {
    throw std::invalid_argument("generate_semstamp: config scheme is not SemStamp");
  }
  return generate_sequence(prompt, T, cfg, sampler, nullptr, nullptr);
}

GenerationResult generate_ksemstamp(const std::string& prompt, std::size_t T,
                                    const WatermarkConfig& cfg,
                                    const CandidateSource& sampler,
                                    const std::vector<Embedding>& centroids) {
  if (cfg.scheme != Scheme::KSemStamp) {
    throw std::invalid_argument("generate_ksemstamp: config scheme is not KSemStamp");
  }
  if (centroids.size() != cfg.centroid_count) {
    throw std::invalid_argument("generate_ksemstamp: centroid count differs from config");
  }
  return generate_sequence(prompt, T, cfg, sampler, nullptr, &centroids);
}

TokenGenerationResult generate_kgw(const std::string& prompt,
                                   std::size_t T_tokens,
                                   const WatermarkConfig& cfg,
                                   const TokenModel& model) {
  if (cfg.scheme != Scheme::KGW) {
    throw std::invalid_argument("generate_kgw: config scheme is not KGW");
  }
  return generate_tokens(prompt, T_tokens, cfg, model, std::nullopt);
}

TokenGenerationResult generate_sweet(const std::string& prompt,
                                     std::size_t T_tokens,
                                     const WatermarkConfig& cfg,
                                     const TokenModel& model) {
  if (cfg.scheme != Scheme::SWEET) {
    throw std::invalid_argument("generate_sweet: config scheme is not SWEET");
  }
  return generate_tokens(prompt, T_tokens, cfg, model, cfg.entropy_threshold);
}

}  // namespace seqmark
