#include "seqmark/transform.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace seqmark {

const char* to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::SampleMean: return "sample_mean";
    case TransformKind::RandomEmbedding: return "random_embedding";
    case TransformKind::ClosestToMean: return "closest_to_mean";
    case TransformKind::SingleSample: return "single_sample";
    case TransformKind::SourceEmbedding: return "source_embedding";
    case TransformKind::TargetEmbedding: return "target_embedding";
    case TransformKind::Identity: return "identity";
  }
  return "unknown";
}

TransformKind transform_kind_from_string(std::string_view name) {
  if (name == "sample_mean") return TransformKind::SampleMean;
  if (name == "random_embedding") return TransformKind::RandomEmbedding;
  if (name == "closest_to_mean") return TransformKind::ClosestToMean;
  if (name == "single_sample") return TransformKind::SingleSample;
  if (name == "source_embedding") return TransformKind::SourceEmbedding;
  if (name == "target_embedding") return TransformKind::TargetEmbedding;
  if (name == "identity") return TransformKind::Identity;
  throw std::invalid_argument("unknown transform kind: " + std::string(name));
}

void TransformSpec::validate() const {
  const bool needs_aux = kind == TransformKind::SourceEmbedding ||
                         kind == TransformKind::TargetEmbedding;
  if (needs_aux && !aux) {
    throw std::invalid_argument("transform requires an aux embedding");
  }
  if (!needs_aux && aux) {
    throw std::invalid_argument("transform does not take an aux embedding");
  }
  const bool needs_seed = kind == TransformKind::RandomEmbedding;
  if (needs_seed && !aux_seed) {
    throw std::invalid_argument("random_embedding transform requires aux_seed");
  }
  if (!needs_seed && aux_seed) {
    throw std::invalid_argument("transform does not take aux_seed");
  }
}

std::string TransformSpec::to_json_text() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (aux) j["aux"] = *aux;
  if (aux_seed) j["aux_seed"] = *aux_seed;
  return j.dump();
}

TransformSpec TransformSpec::from_json_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  TransformSpec spec;
  spec.kind = transform_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("aux")) spec.aux = j.at("aux").get<Embedding>();
  if (j.contains("aux_seed")) spec.aux_seed = j.at("aux_seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

Embedding sample_mean(const CandidateSet& c) {
  if (c.empty()) throw std::invalid_argument("sample_mean: empty candidate set");
  const std::size_t h = c.members.front().size();
  Embedding mean(h, 0.0);
  for (const auto& m : c.members) {
    if (m.size() != h) {
      throw std::invalid_argument("sample_mean: mixed dimensions");
    }
    for (std::size_t i = 0; i < h; ++i) mean[i] += m[i];
  }
  const double inv = 1.0 / static_cast<double>(c.size());
  for (auto& x : mean) x *= inv;
  return mean;
}

Embedding transform_offset(const TransformSpec& spec, const CandidateSet& c,
                           std::size_t h) {
  spec.validate();
  switch (spec.kind) {
    case TransformKind::SampleMean:
      return sample_mean(c);
    case TransformKind::ClosestToMean: {
      const Embedding mean = sample_mean(c);
      std::size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < c.size(); ++i) {
        const double dist = norm(subtract(c.members[i], mean));
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      return c.members[best];
    }
    case TransformKind::SingleSample:
      if (c.empty()) {
        throw std::invalid_argument("single_sample transform: empty candidate set");
      }
      return c.members.front();  // first draw under the seeded sampling order
    case TransformKind::SourceEmbedding:
    case TransformKind::TargetEmbedding:
      return *spec.aux;
    case TransformKind::RandomEmbedding: {
      Rng rng(*spec.aux_seed);
      return normal_vector(rng, h);
    }
    case TransformKind::Identity:
      return Embedding(h, 0.0);
  }
  throw std::logic_error("unreachable transform kind");
}

std::optional<Embedding> subtract_checked(const Embedding& c, const Embedding& z) {
  Embedding out = subtract(c, z);
  // Degenerate when the difference vanishes up to accumulated rounding: the
  // mean of n copies of a vector lands within ~n*eps of it, not exactly on
  // it, and a signature of rounding noise would be meaningless.
  const double scale = std::max(norm(c), norm(z));
  if (norm(out) <= 1e-12 * scale) return std::nullopt;
  return out;
}

std::optional<Embedding> apply_transform(const Embedding& c,
                                         const TransformSpec& spec,
                                         const CandidateSet& set) {
  return subtract_checked(c, transform_offset(spec, set, c.size()));
}

CandidateSet mean_center_set(const CandidateSet& c) {
  if (c.size() < 2) {
    throw std::invalid_argument("mean_center_set: need at least two members");
  }
  const Embedding mean = sample_mean(c);
  CandidateSet out;
  out.members.reserve(c.size());
  for (const auto& m : c.members) {
    out.members.push_back(subtract(m, mean));
  }
  return out;
}

}  // namespace seqmark
