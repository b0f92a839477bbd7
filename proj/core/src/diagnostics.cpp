#include "seqmark/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seqmark/rng.hpp"

namespace seqmark {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr std::uint64_t kTrialTag = 0x545249414cull;  // "TRIAL"

void require_angle_matrix(const std::vector<std::vector<double>>& angles) {
  const std::size_t n = angles.size();
  if (n == 0) throw std::invalid_argument("angle matrix: empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (angles[i].size() != n) {
      throw std::invalid_argument("angle matrix: not square");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double a = angles[i][j];
      if (!(a >= 0.0 && a <= kPi)) {
        throw std::invalid_argument("angle matrix: entry outside [0, pi]");
      }
      if (std::abs(a - angles[j][i]) > 1e-9) {
        throw std::invalid_argument("angle matrix: not symmetric");
      }
    }
  }
}

// I = 1 iff any vector's signature falls in a valid-colored region.
bool any_valid(const std::vector<Embedding>& vectors,
               const HyperplaneSet& planes,
               const std::vector<std::uint8_t>& coloring) {
  for (const auto& v : vectors) {
    if (coloring[lsh_signature(v, planes).value]) return true;
  }
  return false;
}

}  // namespace

RegionStats region_entropy(const std::vector<Embedding>& samples,
                           const std::function<std::uint64_t(const Embedding&)>& region_of) {
  if (samples.empty()) {
    throw std::invalid_argument("region_entropy: empty sample list");
  }
  RegionStats stats;
  stats.sample_count = samples.size();

  std::map<std::uint64_t, std::size_t> counts;
  for (const auto& s : samples) ++counts[region_of(s)];
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (const auto& [region, count] : counts) {
    const double p = static_cast<double>(count) * inv_n;
    stats.occupancy[region] = p;
    stats.entropy_nats -= p * std::log(p);
  }

  double cosine_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      if (norm(samples[i]) == 0.0 || norm(samples[j]) == 0.0) continue;
      cosine_sum += cosine_similarity(samples[i], samples[j]);
      ++pairs;
    }
  }
  stats.mean_pairwise_cosine =
      pairs > 0 ? cosine_sum / static_cast<double>(pairs) : 0.0;
  return stats;
}

RateEstimate expected_detection_accuracy(const std::vector<std::vector<double>>& angles,
                                         double gamma, std::size_t d) {
  require_angle_matrix(angles);
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("expected_detection_accuracy: gamma outside (0, 1)");
  }
  if (d == 0) {
    throw std::invalid_argument("expected_detection_accuracy: d must be >= 1");
  }
  const double n = static_cast<double>(angles.size());
  double collision_sum = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    for (std::size_t j = i + 1; j < angles.size(); ++j) {
      collision_sum += collision_probability(angles[i][j], d);
    }
  }
  const double pair_count = n * (n - 1.0) / 2.0;
  const double value = n * gamma - pair_count * gamma * gamma -
                       gamma * (1.0 - gamma) * collision_sum;
  return RateEstimate{value, value >= 0.0 && value <= 1.0};
}

std::vector<std::vector<double>> pairwise_angles(const std::vector<Embedding>& vectors) {
  const std::size_t n = vectors.size();
  std::vector<std::vector<double>> angles(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      angles[i][j] = angles[j][i] = angle_between(vectors[i], vectors[j]);
    }
  }
  return angles;
}

std::vector<std::uint8_t> bernoulli_coloring(std::uint64_t seed,
                                             std::uint64_t count, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("bernoulli_coloring: gamma outside (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::uint8_t> coloring(count);
  for (auto& c : coloring) c = rng.uniform01() < gamma ? 1 : 0;
  return coloring;
}

FormulaCheck verify_detection_accuracy(const std::vector<Embedding>& vectors,
                                       double gamma, std::size_t d,
                                       std::size_t trials, std::uint64_t seed) {
  if (vectors.empty()) {
    throw std::invalid_argument("verify_detection_accuracy: no vectors");
  }
  if (trials == 0) {
    throw std::invalid_argument("verify_detection_accuracy: trials must be >= 1");
  }
  const std::size_t h = vectors.front().size();
  const std::uint64_t region_count = 1ull << d;

  std::size_t hits = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = seed_seq({kTrialTag, seed, trial});
    const HyperplaneSet planes = HyperplaneSet::generate(trial_seed, d, h);
    const auto coloring =
        bernoulli_coloring(seed_seq({kTrialTag, seed, trial, 1}), region_count, gamma);
    hits += any_valid(vectors, planes, coloring);
  }

  FormulaCheck check;
  check.empirical = static_cast<double>(hits) / static_cast<double>(trials);
  const RateEstimate predicted =
      expected_detection_accuracy(pairwise_angles(vectors), gamma, d);
  check.predicted = predicted.value;
  check.predicted_in_range = predicted.in_unit_range;
  check.abs_gap = std::abs(check.empirical - check.predicted);
  return check;
}

double clustered_cosine_lower_bound(double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw std::invalid_argument("clustered_cosine_lower_bound: delta outside [0, 1]");
  }
  return (1.0 - 2.0 * delta - delta * delta) /
         (1.0 + 2.0 * delta + delta * delta);
}

ClusteredDraw draw_clustered_vectors(std::size_t h, std::size_t n, double delta,
                                     std::uint64_t seed) {
  if (h == 0 || n == 0) {
    throw std::invalid_argument("draw_clustered_vectors: h and n must be >= 1");
  }
  Rng rng(seed);
  Embedding mu = normal_vector(rng, h);
  double mu_norm = norm(mu);
  while (mu_norm == 0.0) {  // measure-zero, but keep the draw total
    mu = normal_vector(rng, h);
    mu_norm = norm(mu);
  }
  mu = scale(mu, 1.0 / mu_norm);

  ClusteredDraw draw;
  draw.mu = mu;
  draw.vectors.reserve(n);
  const double sigma = delta / std::sqrt(static_cast<double>(h));
  for (std::size_t i = 0; i < n; ++i) {
    Embedding eps = normal_vector(rng, h);
    for (auto& x : eps) x *= sigma;
    const double eps_norm = norm(eps);
    if (eps_norm > delta && eps_norm > 0.0) {
      const double shrink = delta / eps_norm;
      for (auto& x : eps) x *= shrink;
    }
    draw.vectors.push_back(add(mu, eps));
  }
  return draw;
}

CenteringCheck verify_mean_centering_gain(std::size_t h, std::size_t n,
                                          double delta, double gamma,
                                          std::size_t d, std::size_t trials,
                                          std::uint64_t seed) {
  if (n < 2) {
    throw std::invalid_argument("verify_mean_centering_gain: n must be >= 2");
  }
  if (trials == 0) {
    throw std::invalid_argument("verify_mean_centering_gain: trials must be >= 1");
  }
  CenteringCheck check;
  if (delta == 0.0) {
    // Residuals vanish: the centered set is all-zero and has no signatures.
    check.degenerate = true;
    check.raw_bound_held = true;
    return check;
  }

  const double bound = clustered_cosine_lower_bound(delta);
  const std::uint64_t region_count = 1ull << d;
  std::size_t raw_hits = 0, centered_hits = 0, not_worse = 0, hypothesis_held = 0;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = seed_seq({kTrialTag, seed, trial, 2});
    const ClusteredDraw draw = draw_clustered_vectors(h, n, delta, trial_seed);
    const CandidateSet centered = mean_center_set(CandidateSet{draw.vectors});

    bool all_centered_below = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        check.min_raw_cosine = std::min(
            check.min_raw_cosine,
            cosine_similarity(draw.vectors[i], draw.vectors[j]));
        const Embedding& ui = centered.members[i];
        const Embedding& uj = centered.members[j];
        if (norm(ui) > 0.0 && norm(uj) > 0.0 &&
            cosine_similarity(ui, uj) > bound) {
          all_centered_below = false;
        }
      }
    }
    hypothesis_held += all_centered_below;

    const HyperplaneSet planes =
        HyperplaneSet::generate(seed_seq({kTrialTag, seed, trial, 3}), d, h);
    const auto coloring = bernoulli_coloring(
        seed_seq({kTrialTag, seed, trial, 4}), region_count, gamma);
    const bool raw_hit = any_valid(draw.vectors, planes, coloring);
    const bool centered_hit = any_valid(centered.members, planes, coloring);
    raw_hits += raw_hit;
    centered_hits += centered_hit;
    not_worse += (centered_hit || !raw_hit);
  }

  const double inv = 1.0 / static_cast<double>(trials);
  check.acc_raw = static_cast<double>(raw_hits) * inv;
  check.acc_centered = static_cast<double>(centered_hits) * inv;
  check.centered_not_worse_rate = static_cast<double>(not_worse) * inv;
  check.hypothesis_rate = static_cast<double>(hypothesis_held) * inv;
  check.raw_bound_held = check.min_raw_cosine >= bound - 1e-6;
  return check;
}

bool rate_monotone_in_angles(const std::vector<std::vector<double>>& angles,
                             std::size_t d, double gamma, double epsilon) {
  require_angle_matrix(angles);
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("rate_monotone_in_angles: epsilon must be > 0");
  }
  const double base = expected_detection_accuracy(angles, gamma, d).value;
  const std::size_t n = angles.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      auto bumped = angles;
      const double theta = std::min(angles[i][j] + epsilon, kPi);
      bumped[i][j] = bumped[j][i] = theta;
      const double value = expected_detection_accuracy(bumped, gamma, d).value;
      if (value < base - 1e-12) return false;
    }
  }
  return true;
}

}  // namespace seqmark
