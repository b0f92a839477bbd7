#pragma once

/**
 * Detection and classification metrics.
 *
 * Sequence detection replays the generation-side derivations with the same
 * key: per sentence it rebuilds the step partition from the previous raw
 * region, re-obtains the manifold offset, and counts valid regions. With one
 * sentence the decision is binary (D >= 1); with M >= 2 a one-proportion
 * z-test against the chance rate gamma_eff = floor(gamma * regions)/regions
 * is thresholded.
 *
 * Token detection recounts per-step green lists from each previous token; the
 * first token is skipped (its green list is seeded by the prompt, which the
 * detector does not see). SWEET mode additionally needs the model to recompute
 * next-token entropies and counts only gated steps.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqmark/samplers.hpp"
#include "seqmark/watermark.hpp"

namespace seqmark {

struct DetectionStep {
  std::uint64_t region = 0;
  std::string region_bits;
  bool valid = false;
  bool degenerate = false;
};

struct DetectionResult {
  std::size_t examined = 0;  // M
  std::size_t valid = 0;     // D
  std::optional<double> z;   // present when M >= 2
  bool decision = false;
  std::vector<DetectionStep> per_step;
};

// One-proportion z statistic: (D - gamma_eff*M) / sqrt(M*gamma_eff*(1-gamma_eff)).
double z_score(std::size_t valid, std::size_t examined, double gamma_eff);

// score >= threshold.
bool classify(double score, double threshold);

DetectionResult detect_sequence(const std::vector<std::string>& sentences,
                                const std::string& prompt,
                                const WatermarkConfig& cfg,
                                const CandidateSource& sampler,
                                const MeanProvider& mean_provider,
                                const std::vector<Embedding>* centroids = nullptr);

// tokens.size() >= 2; scores tokens[1..] (green list of token t is keyed by
// token t-1). `model` with `entropy_threshold` enables SWEET gating;
// `temperature` must match the generation-time temperature for the entropy
// computation to agree.
DetectionResult detect_kgw(const std::vector<int>& tokens, SecretKey key,
                           double gamma, std::size_t vocab_size,
                           double z_threshold = 2.0,
                           const TokenModel* model = nullptr,
                           std::optional<double> entropy_threshold = std::nullopt,
                           double temperature = 1.0);

struct PrfReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Standard definitions; precision is 0 (not undefined) with no positive
// predictions. Requires equal lengths and at least one positive label.
PrfReport precision_recall_f1(const std::vector<bool>& predictions,
                              const std::vector<bool>& labels);

// Rank-based AUROC: P(pos > neg) + 0.5 * P(tie), via midranks.
double auroc(const std::vector<double>& scores_pos,
             const std::vector<double>& scores_neg);

// TPR at the smallest threshold whose empirical FPR is <= fpr_level
// (classification rule: score >= threshold). 0 when only an infinite
// threshold qualifies.
double tpr_at_fpr(const std::vector<double>& scores_pos,
                  const std::vector<double>& scores_neg, double fpr_level);

struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auroc = 0.5;
  std::map<double, double> tpr_at_fpr;  // level -> TPR
};

// Rotates v by `angle` toward a seeded random direction orthogonalized
// against v; preserves the norm and lands at exactly the requested angle.
// Simulates a paraphrase of bounded semantic drift.
Embedding perturb_embedding(const Embedding& v, double angle, std::uint64_t seed);

}  // namespace seqmark
