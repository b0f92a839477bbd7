#pragma once

/**
 * Region-collapse measurement and Monte Carlo verification of the detection
 * theory.
 *
 * The closed-form expected detection rate is the second-order
 * inclusion-exclusion approximation
 *
 *     E[I] ~= n*gamma - C(n,2)*gamma^2 - gamma*(1-gamma) * sum_{i<j} q_ij,
 *     q_ij = (1 - theta_ij/pi)^d,
 *
 * where I indicates that at least one of n vectors lands in a valid region.
 * The truncation can leave the unit interval for strongly correlated vector
 * sets; the raw value is returned with an in-range flag rather than clamped.
 *
 * The Monte Carlo verifiers color each region valid independently with
 * probability gamma (matching the independence assumed by the closed form);
 * the generation pipeline itself uses fixed-size valid sets, which agree
 * with independent coloring as the region count grows.
 */

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "seqmark/geometry.hpp"
#include "seqmark/transform.hpp"

namespace seqmark {

struct RegionStats {
  double entropy_nats = 0.0;
  std::map<std::uint64_t, double> occupancy;  // region -> empirical probability
  double mean_pairwise_cosine = 0.0;          // over the raw samples; 0 if < 2
  std::size_t sample_count = 0;
};

// Monte Carlo occupancy + Shannon entropy (nats) under `region_of`, plus the
// mean pairwise cosine of the samples themselves.
RegionStats region_entropy(const std::vector<Embedding>& samples,
                           const std::function<std::uint64_t(const Embedding&)>& region_of);

struct RateEstimate {
  double value = 0.0;
  bool in_unit_range = false;
};

// Closed-form E[I] from a symmetric pairwise angle matrix (radians, [0, pi]).
RateEstimate expected_detection_accuracy(const std::vector<std::vector<double>>& angles,
                                         double gamma, std::size_t d);

std::vector<std::vector<double>> pairwise_angles(const std::vector<Embedding>& vectors);

// Independent per-region Bernoulli(gamma) coloring; 1 = valid.
std::vector<std::uint8_t> bernoulli_coloring(std::uint64_t seed,
                                             std::uint64_t count, double gamma);

struct FormulaCheck {
  double empirical = 0.0;
  double predicted = 0.0;
  double abs_gap = 0.0;
  bool predicted_in_range = false;
};

// Empirical E[I] over fresh hyperplanes + fresh independent coloring per
// trial, against the closed form evaluated on the fixed vector set.
FormulaCheck verify_detection_accuracy(const std::vector<Embedding>& vectors,
                                       double gamma, std::size_t d,
                                       std::size_t trials, std::uint64_t seed);

// (1 - 2*delta - delta^2) / (1 + 2*delta + delta^2): the lower bound on raw
// pairwise cosines of delta-clustered vectors, and the hypothesis threshold
// for their centered residuals.
double clustered_cosine_lower_bound(double delta);

// x_i = mu + eps_i with |eps_i| <= delta*|mu|, isotropic eps, |mu| = 1.
struct ClusteredDraw {
  Embedding mu;
  std::vector<Embedding> vectors;
};
ClusteredDraw draw_clustered_vectors(std::size_t h, std::size_t n, double delta,
                                     std::uint64_t seed);

struct CenteringCheck {
  double acc_raw = 0.0;            // E[I] of the raw vectors
  double acc_centered = 0.0;       // E[I] after mean-centering
  double centered_not_worse_rate = 0.0;  // per-trial I_centered >= I_raw
  double hypothesis_rate = 0.0;    // trials where all centered cosines <= bound
  double min_raw_cosine = 1.0;     // over all trials and pairs
  bool raw_bound_held = false;     // min_raw_cosine >= bound - 1e-6
  bool degenerate = false;         // delta == 0: residuals vanish
};

// Paired comparison: each trial draws a clustered set, mean-centers it, and
// evaluates both sets against the same hyperplanes and coloring.
CenteringCheck verify_mean_centering_gain(std::size_t h, std::size_t n,
                                          double delta, double gamma,
                                          std::size_t d, std::size_t trials,
                                          std::uint64_t seed);

// Finite-difference sweep: E[I] must not decrease when any single pairwise
// angle grows by epsilon (clamped at pi).
bool rate_monotone_in_angles(const std::vector<std::vector<double>>& angles,
                             std::size_t d, double gamma, double epsilon);

}  // namespace seqmark
