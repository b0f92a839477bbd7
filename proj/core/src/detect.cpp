#include "seqmark/detect.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace seqmark {

namespace {

// Mirrors the generation-side offset derivation (watermark.cpp). Kept in
// lockstep via the shared seed helpers; the round-trip tests pin equality.
Embedding detection_offset(const WatermarkConfig& cfg, const TransformSpec& spec,
                           std::uint64_t prompt_digest, std::uint64_t mean_step,
                           const CandidateSource& sampler,
                           const MeanProvider& provider, std::size_t h) {
  switch (spec.kind) {
    case TransformKind::Identity:
      return Embedding(h, 0.0);
    case TransformKind::SourceEmbedding:
    case TransformKind::TargetEmbedding:
      return transform_offset(spec, CandidateSet{}, h);
    case TransformKind::RandomEmbedding: {
      TransformSpec per_step = spec;
      per_step.aux_seed = seed_seq({*spec.aux_seed, mean_step});
      return transform_offset(per_step, CandidateSet{}, h);
    }
    case TransformKind::SampleMean:
      return provider.provide(prompt_digest, mean_step, cfg.manifold_samples,
                              sampler, cfg.mean_temperature);
    case TransformKind::ClosestToMean:
    case TransformKind::SingleSample: {
      const CandidateSet set = provider.provide_set(
          prompt_digest, mean_step, cfg.manifold_samples, sampler,
          cfg.mean_temperature);
      return transform_offset(spec, set, h);
    }
  }
  throw std::logic_error("unreachable transform kind");
}

}  // namespace

double z_score(std::size_t valid, std::size_t examined, double gamma_eff) {
  if (examined == 0) throw std::invalid_argument("z_score: M must be >= 1");
  if (!(gamma_eff > 0.0 && gamma_eff < 1.0)) {
    throw std::invalid_argument("z_score: gamma_eff must be in (0, 1)");
  }
  const double m = static_cast<double>(examined);
  const double d = static_cast<double>(valid);
  return (d - gamma_eff * m) / std::sqrt(m * gamma_eff * (1.0 - gamma_eff));
}

bool classify(double score, double threshold) { return score >= threshold; }

DetectionResult detect_sequence(const std::vector<std::string>& sentences,
                                const std::string& prompt,
                                const WatermarkConfig& cfg,
                                const CandidateSource& sampler,
                                const MeanProvider& mean_provider,
                                const std::vector<Embedding>* centroids) {
  cfg.validate();
  if (sentences.empty()) {
    throw std::invalid_argument("detect_sequence: empty sentence list");
  }
  const bool centroid_scheme = cfg.scheme == Scheme::KSemStamp;
  if (centroid_scheme && (centroids == nullptr || centroids->empty())) {
    throw std::invalid_argument("detect_sequence: KSemStamp needs centroids");
  }
  if (cfg.scheme == Scheme::KGW || cfg.scheme == Scheme::SWEET) {
    throw std::invalid_argument("detect_sequence: token schemes use detect_kgw");
  }

  const std::uint64_t digest = fnv1a64(prompt);
  const std::size_t h = sampler.embed_dim();
  const TransformSpec spec = effective_transform(cfg);

  HyperplaneSet planes;
  if (!centroid_scheme) {
    planes = HyperplaneSet::generate(hyperplane_seed(cfg.key), cfg.lsh_dim, h);
  }

  DetectionResult result;
  result.examined = sentences.size();
  result.per_step.reserve(sentences.size());

  double gamma_eff = 0.0;
  std::uint64_t prev_region = 0;
  for (std::size_t t = 0; t < sentences.size(); ++t) {
    const Embedding raw = sampler.embed(sentences[t]);
    if (raw.size() != h) {
      throw std::invalid_argument("detect_sequence: embedding dimension mismatch");
    }
    const std::uint64_t step_seed = derive_step_seed(cfg.key, digest, prev_region);

    DetectionStep step;
    if (centroid_scheme) {
      const CentroidPartition part =
          CentroidPartition::make(*centroids, step_seed, cfg.gamma);
      gamma_eff = part.gamma_eff();
      const auto assign = assign_centroid_region(raw, part);
      step = DetectionStep{assign.index, "", assign.valid, false};
      prev_region = assign.index;
    } else {
      const RegionPartition part =
          RegionPartition::make(step_seed, cfg.lsh_dim, cfg.gamma);
      gamma_eff = part.gamma_eff();
      const std::uint64_t mean_step = sampler.history_dependent() ? t : 0;
      const Embedding offset = detection_offset(cfg, spec, digest, mean_step,
                                                sampler, mean_provider, h);
      const auto centered = subtract_checked(raw, offset);
      if (!centered) {
        step = DetectionStep{0, Signature::from_value(0, cfg.lsh_dim).bits,
                             false, true};
      } else {
        const Signature sig = lsh_signature(*centered, planes);
        step = DetectionStep{sig.value, sig.bits, part.is_valid(sig), false};
      }
      prev_region = lsh_signature(raw, planes).value;
    }

    if (step.valid) ++result.valid;
    result.per_step.push_back(std::move(step));
  }

  if (result.examined >= 2) {
    result.z = z_score(result.valid, result.examined, gamma_eff);
    result.decision = classify(*result.z, cfg.z_threshold);
  } else {
    result.decision = result.valid >= 1;
  }
  return result;
}

DetectionResult detect_kgw(const std::vector<int>& tokens, SecretKey key,
                           double gamma, std::size_t vocab_size,
                           double z_threshold, const TokenModel* model,
                           std::optional<double> entropy_threshold,
                           double temperature) {
  if (tokens.size() < 2) {
    throw std::invalid_argument("detect_kgw: need at least two tokens");
  }
  if (entropy_threshold && model == nullptr) {
    throw std::invalid_argument("detect_kgw: entropy gating requires the model");
  }

  DetectionResult result;
  std::vector<int> prefix;
  prefix.reserve(tokens.size());
  prefix.push_back(tokens.front());
  double gamma_eff = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    bool counted = true;
    if (entropy_threshold) {
      counted = token_entropy(*model, prefix, temperature) >= *entropy_threshold;
    }
    if (counted) {
      const auto prev = static_cast<std::uint64_t>(tokens[t - 1]);
      const std::uint64_t step_seed = derive_step_seed(key, 0, prev);
      const auto mask = partition_mask(step_seed, vocab_size, gamma);
      const bool green = mask[static_cast<std::size_t>(tokens[t])] != 0;
      const auto green_count = static_cast<double>(
          std::count(mask.begin(), mask.end(), std::uint8_t{1}));
      gamma_eff = green_count / static_cast<double>(vocab_size);
      ++result.examined;
      if (green) ++result.valid;
      result.per_step.push_back(
          DetectionStep{static_cast<std::uint64_t>(tokens[t]), "", green, false});
    }
    prefix.push_back(tokens[t]);
  }

  if (result.examined == 0) {
    throw std::runtime_error("detect_kgw: entropy gate excluded every step (M = 0)");
  }
  if (result.examined >= 2) {
    result.z = z_score(result.valid, result.examined, gamma_eff);
    result.decision = classify(*result.z, z_threshold);
  } else {
    result.decision = result.valid >= 1;
  }
  return result;
}

PrfReport precision_recall_f1(const std::vector<bool>& predictions,
                              const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("precision_recall_f1: length mismatch");
  }
  std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    pos += labels[i];
    if (predictions[i] && labels[i]) ++tp;
    if (predictions[i] && !labels[i]) ++fp;
    if (!predictions[i] && labels[i]) ++fn;
  }
  if (pos == 0) {
    throw std::invalid_argument("precision_recall_f1: no positive labels");
  }
  PrfReport report;
  report.precision = (tp + fp) == 0 ? 0.0
                                    : static_cast<double>(tp) /
                                          static_cast<double>(tp + fp);
  report.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double pr = report.precision + report.recall;
  report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
  return report;
}

double auroc(const std::vector<double>& scores_pos,
             const std::vector<double>& scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) {
    throw std::invalid_argument("auroc: both score lists must be nonempty");
  }
  // Midrank formulation of the Mann-Whitney statistic.
  struct Tagged {
    double score;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(scores_pos.size() + scores_neg.size());
  for (double s : scores_pos) all.push_back({s, true});
  for (double s : scores_neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(scores_pos.size());
  const double nn = static_cast<double>(scores_neg.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double tpr_at_fpr(const std::vector<double>& scores_pos,
                  const std::vector<double>& scores_neg, double fpr_level) {
  if (scores_pos.empty() || scores_neg.empty()) {
    throw std::invalid_argument("tpr_at_fpr: both score lists must be nonempty");
  }
  std::set<double> thresholds(scores_pos.begin(), scores_pos.end());
  thresholds.insert(scores_neg.begin(), scores_neg.end());
  for (double thr : thresholds) {  // ascending: smallest qualifying threshold
    std::size_t fp = 0;
    for (double s : scores_neg) fp += (s >= thr);
    const double fpr = static_cast<double>(fp) /
                       static_cast<double>(scores_neg.size());
    if (fpr <= fpr_level) {
      std::size_t tp = 0;
      for (double s : scores_pos) tp += (s >= thr);
      return static_cast<double>(tp) / static_cast<double>(scores_pos.size());
    }
  }
  return 0.0;  // only an infinite threshold meets the level
}

Embedding perturb_embedding(const Embedding& v, double angle, std::uint64_t seed) {
  constexpr double pi = 3.141592653589793238462643383279502884;
  if (!(angle >= 0.0 && angle <= pi)) {
    throw std::invalid_argument("perturb_embedding: angle outside [0, pi]");
  }
  if (v.size() < 2) {
    throw std::invalid_argument("perturb_embedding: need dimension >= 2");
  }
  const double v_norm = norm(v);
  if (v_norm == 0.0) {
    throw std::invalid_argument("perturb_embedding: zero-norm input");
  }
  const Embedding unit = scale(v, 1.0 / v_norm);

  Rng rng(seed);
  Embedding ortho;
  for (int tries = 0; tries < 64; ++tries) {
    Embedding r = normal_vector(rng, v.size());
    Embedding w = subtract(r, scale(unit, dot(r, unit)));
    const double w_norm = norm(w);
    if (w_norm > 1e-12) {
      ortho = scale(w, 1.0 / w_norm);
      break;
    }
  }
  if (ortho.empty()) {
    throw std::runtime_error("perturb_embedding: could not find an orthogonal direction");
  }

  Embedding out(v.size());
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v_norm * (c * unit[i] + s * ortho[i]);
  }
  return out;
}

}  // namespace seqmark
