#include "seqmark/samplers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace seqmark {

namespace {

constexpr std::uint64_t kResidualTag = 0x5245534944ull;   // "RESID"
constexpr std::uint64_t kMeanDrawTag = 0x4d45414eull;     // "MEAN"

std::vector<double> softmax(std::vector<double> logits) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& x : logits) {
    x = std::exp(x - max_logit);
    sum += x;
  }
  for (auto& x : logits) x /= sum;
  return logits;
}

std::size_t sample_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;  // guard against rounding at the tail
}

}  // namespace

ClusterModel::ClusterModel(std::size_t h, std::vector<ClusterSpec> clusters)
    : h_(h), clusters_(std::move(clusters)) {
  if (h_ == 0) throw std::invalid_argument("ClusterModel: h must be >= 1");
  if (clusters_.empty()) {
    throw std::invalid_argument("ClusterModel: need at least one cluster");
  }
  double weight_sum = 0.0;
  for (auto& c : clusters_) {
    if (c.direction.size() != h_) {
      throw std::invalid_argument("ClusterModel: direction dimension mismatch");
    }
    const double n = norm(c.direction);
    if (n == 0.0 || !all_finite(c.direction)) {
      throw std::invalid_argument("ClusterModel: direction must be finite and nonzero");
    }
    c.direction = scale(c.direction, 1.0 / n);
    if (!(c.weight > 0.0)) {
      throw std::invalid_argument("ClusterModel: weights must be positive");
    }
    if (!(c.residual_delta >= 0.0 && c.residual_delta < 1.0)) {
      throw std::invalid_argument("ClusterModel: residual_delta must be in [0, 1)");
    }
    weight_sum += c.weight;
  }
  for (auto& c : clusters_) c.weight /= weight_sum;
}

std::uint32_t ClusterModel::pick_cluster(double temperature, Rng& rng) const {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("ClusterModel: temperature must be > 0");
  }
  if (clusters_.size() == 1) {
    (void)rng.uniform01();  // keep the stream layout uniform across models
    return 0;
  }
  // w^(1/tau) renormalized, computed in log space for small tau.
  std::vector<double> logw(clusters_.size());
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    logw[i] = std::log(clusters_[i].weight) / temperature;
  }
  return static_cast<std::uint32_t>(sample_categorical(softmax(std::move(logw)), rng));
}

Embedding ClusterModel::embedding_for(std::uint32_t cluster,
                                      std::uint64_t seed) const {
  if (cluster >= clusters_.size()) {
    throw std::invalid_argument("ClusterModel: cluster index out of range");
  }
  const ClusterSpec& spec = clusters_[cluster];
  // Residual stream is keyed off (seed, cluster) so the embedding does not
  // depend on the temperature used to pick the cluster.
  Rng rng(seed_seq({kResidualTag, seed, cluster}));
  const double cap = spec.residual_delta;  // |mu| == 1 after normalization
  Embedding eps = normal_vector(rng, h_);
  const double sigma = cap / std::sqrt(static_cast<double>(h_));
  for (auto& x : eps) x *= sigma;
  const double eps_norm = norm(eps);
  if (eps_norm > cap && eps_norm > 0.0) {
    const double shrink = cap / eps_norm;
    for (auto& x : eps) x *= shrink;
  }
  return add(spec.direction, eps);
}

std::string ClusterModel::encode_text(std::uint32_t cluster, std::uint64_t seed) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "c%u:s%016llx", cluster,
                static_cast<unsigned long long>(seed));
  return buf;
}

std::pair<std::uint32_t, std::uint64_t> ClusterModel::parse_text(
    const std::string& text) {
  const auto colon = text.find(":s");
  if (text.size() < 4 || text[0] != 'c' || colon == std::string::npos) {
    throw std::invalid_argument("ClusterModel: unparseable candidate text: " + text);
  }
  std::uint32_t cluster = 0;
  auto rc = std::from_chars(text.data() + 1, text.data() + colon, cluster);
  if (rc.ec != std::errc{} || rc.ptr != text.data() + colon) {
    throw std::invalid_argument("ClusterModel: bad cluster id in: " + text);
  }
  std::uint64_t seed = 0;
  const char* hex_begin = text.data() + colon + 2;
  const char* hex_end = text.data() + text.size();
  rc = std::from_chars(hex_begin, hex_end, seed, 16);
  if (rc.ec != std::errc{} || rc.ptr != hex_end || hex_begin == hex_end) {
    throw std::invalid_argument("ClusterModel: bad seed in: " + text);
  }
  return {cluster, seed};
}

Candidate ClusterModel::sample(double temperature, std::uint64_t seed) const {
  Rng rng(seed);
  const std::uint32_t k = pick_cluster(temperature, rng);
  Candidate cand;
  cand.text = encode_text(k, seed);
  cand.embedding = embedding_for(k, seed);
  cand.quality = clusters_[k].weight;
  cand.cluster_id = k;
  return cand;
}

Embedding ClusterModel::embed(const std::string& text) const {
  const auto [cluster, seed] = parse_text(text);
  return embedding_for(cluster, seed);
}

std::vector<double> TokenModel::logits(const std::vector<int>& prefix) const {
  if (vocab_size < 2) throw std::invalid_argument("TokenModel: vocab_size must be >= 2");
  if (!(entropy_knob >= 0.0)) {
    throw std::invalid_argument("TokenModel: entropy_knob must be >= 0");
  }
  std::vector<double> raw = base_logits(prefix);
  if (raw.size() != vocab_size) {
    throw std::invalid_argument("TokenModel: base_logits returned wrong length");
  }
  const double flatten = 1.0 / (1.0 + entropy_knob);
  for (auto& x : raw) x *= flatten;
  return raw;
}

double token_entropy(const TokenModel& model, const std::vector<int>& prefix,
                     double temperature) {
  std::vector<double> l = model.logits(prefix);
  for (auto& x : l) x /= temperature;
  const std::vector<double> p = softmax(std::move(l));
  double h = 0.0;
  for (double pi : p) {
    if (pi > 0.0) h -= pi * std::log(pi);
  }
  return h;
}

TokenSequence sample_token_sequence(const TokenModel& model, std::size_t length,
                                    double temperature,
                                    const std::optional<TokenBias>& bias,
                                    std::uint64_t seed) {
  if (length == 0) {
    throw std::invalid_argument("sample_token_sequence: length must be >= 1");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("sample_token_sequence: temperature must be > 0");
  }
  TokenSequence out;
  out.tokens.reserve(length);
  Rng rng(seed);
  double logprob_sum = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    const std::vector<double> raw = model.logits(out.tokens);
    std::vector<double> l = raw;
    for (auto& x : l) x /= temperature;

    std::vector<std::uint8_t> green_mask;
    bool applied = false;
    if (bias) {
      bool eligible = true;
      if (bias->entropy_threshold) {
        eligible = token_entropy(model, out.tokens, temperature) >=
                   *bias->entropy_threshold;
      }
      // The first green list is seeded by the prompt; later ones only by the
      // previous token, so a detector without the prompt can recount them.
      const std::uint64_t step_seed =
          t == 0 ? derive_step_seed(bias->key, bias->prompt_digest, 0)
                 : derive_step_seed(bias->key, 0,
                                    static_cast<std::uint64_t>(out.tokens.back()));
      green_mask = partition_mask(step_seed, model.vocab_size, bias->gamma);
      if (eligible) {
        for (std::size_t v = 0; v < model.vocab_size; ++v) {
          if (green_mask[v]) l[v] += bias->delta_bias;
        }
        applied = true;
      }
    }

    const std::size_t token = sample_categorical(softmax(std::move(l)), rng);
    out.tokens.push_back(static_cast<int>(token));
    if (bias) {
      out.green.push_back(green_mask[token]);
      out.biased.push_back(applied ? 1 : 0);
    }
    // Quality proxy: log-likelihood under the unbiased model at tau = 1.
    const std::vector<double> p_unbiased = softmax(raw);
    logprob_sum += std::log(std::max(p_unbiased[token], 1e-300));
  }
  out.mean_logprob = logprob_sum / static_cast<double>(length);
  return out;
}

std::uint64_t mean_draw_seed(SecretKey key, std::uint64_t prompt_digest,
                             std::uint64_t step, std::uint64_t index) {
  return seed_seq({kMeanDrawTag, key.value, prompt_digest, step, index});
}

MeanProvider MeanProvider::resample_oracle(SecretKey key) {
  MeanProvider mp;
  mp.mode_ = Mode::ResampleOracle;
  mp.key_ = key;
  return mp;
}

MeanProvider MeanProvider::fixed_vectors(
    std::map<std::pair<std::uint64_t, std::uint64_t>, Embedding> table) {
  MeanProvider mp;
  mp.mode_ = Mode::FixedVector;
  mp.table_ = std::move(table);
  return mp;
}

CandidateSet MeanProvider::provide_set(std::uint64_t prompt_digest,
                                       std::uint64_t step, std::size_t n,
                                       const CandidateSource& sampler,
                                       double temperature) const {
  if (mode_ != Mode::ResampleOracle) {
    throw std::runtime_error("MeanProvider: candidate set unavailable in FixedVector mode");
  }
  if (n == 0) {
    throw std::invalid_argument("MeanProvider: need at least one manifold sample");
  }
  CandidateSet set;
  set.members.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.members.push_back(
        sampler.sample(temperature, mean_draw_seed(key_, prompt_digest, step, i))
            .embedding);
  }
  return set;
}

Embedding MeanProvider::provide(std::uint64_t prompt_digest, std::uint64_t step,
                                std::size_t n, const CandidateSource& sampler,
                                double temperature) const {
  if (mode_ == Mode::FixedVector) {
    const auto it = table_.find({prompt_digest, step});
    if (it == table_.end()) {
      throw std::runtime_error("MeanProvider: no stored mean for this prompt/step");
    }
    return it->second;
  }
  return sample_mean(provide_set(prompt_digest, step, n, sampler, temperature));
}

}  // namespace seqmark
