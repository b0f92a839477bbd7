#include "seqmark/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace seqmark {

namespace {

std::uint64_t checked_valid_count(std::uint64_t count, double gamma) {
  if (count < 2) {
    throw std::invalid_argument("partition: need at least two regions");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("partition: gamma must be in (0, 1)");
  }
  const auto valid =
      static_cast<std::uint64_t>(std::floor(gamma * static_cast<double>(count)));
  if (valid == 0) {
    throw std::invalid_argument("partition: floor(gamma * count) is 0");
  }
  if (valid >= count) {
    throw std::invalid_argument("partition: floor(gamma * count) leaves no blocked region");
  }
  return valid;
}

double squared_distance(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::uint64_t derive_step_seed(SecretKey key, std::uint64_t prompt_digest,
                               std::uint64_t prev_region) {
  return mix64(key.value ^ mix64(prompt_digest) ^ mix64(prev_region + 1));
}

std::uint64_t derive_step_seed(SecretKey key, std::uint64_t prompt_digest,
                               const Signature& prev_signature) {
  return derive_step_seed(key, prompt_digest, prev_signature.value);
}

std::vector<std::uint64_t> partition_choice(std::uint64_t seed,
                                            std::uint64_t count, double gamma) {
  const std::uint64_t valid = checked_valid_count(count, gamma);
  std::vector<std::uint64_t> ids(count);
  std::iota(ids.begin(), ids.end(), 0ull);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `valid` entries match the full shuffle.
  for (std::uint64_t i = 0; i < valid; ++i) {
    const std::uint64_t j = i + rng.uniform_index(count - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(valid);
  return ids;
}

std::vector<std::uint8_t> partition_mask(std::uint64_t seed,
                                         std::uint64_t count, double gamma) {
  std::vector<std::uint8_t> mask(count, 0);
  for (std::uint64_t id : partition_choice(seed, count, gamma)) {
    mask[id] = 1;
  }
  return mask;
}

RegionPartition RegionPartition::make(std::uint64_t seed, std::size_t d,
                                      double gamma) {
  if (d == 0 || d > 20) {
    throw std::invalid_argument("RegionPartition: d must be in [1, 20]");
  }
  RegionPartition part;
  part.d = d;
  part.gamma = gamma;
  part.derivation_seed = seed;
  const std::uint64_t count = 1ull << d;
  part.valid_mask = partition_mask(seed, count, gamma);
  for (std::uint64_t id = 0; id < count; ++id) {
    if (part.valid_mask[id]) part.valid_set.push_back(id);
  }
  return part;
}

double RegionPartition::gamma_eff() const {
  return static_cast<double>(valid_count()) /
         static_cast<double>(region_count());
}

bool RegionPartition::is_valid(const Signature& sig) const {
  if (sig.size() != d) {
    throw std::invalid_argument("is_valid: signature length != partition d");
  }
  return valid_mask[sig.value] != 0;
}

std::string RegionPartition::to_json_text() const {
  nlohmann::json j{{"seed", derivation_seed}, {"d", d}, {"gamma", gamma}};
  return j.dump();
}

RegionPartition RegionPartition::from_json_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  return make(j.at("seed").get<std::uint64_t>(), j.at("d").get<std::size_t>(),
              j.at("gamma").get<double>());
}

CentroidPartition CentroidPartition::make(std::vector<Embedding> centroids,
                                          std::uint64_t seed, double gamma) {
  if (centroids.size() < 2) {
    throw std::invalid_argument("CentroidPartition: need K >= 2 centroids");
  }
  CentroidPartition part;
  part.centroids = std::move(centroids);
  part.gamma = gamma;
  part.derivation_seed = seed;
  part.valid_mask = partition_mask(seed, part.centroids.size(), gamma);
  for (std::uint32_t i = 0; i < part.centroids.size(); ++i) {
    if (part.valid_mask[i]) part.valid_centroids.push_back(i);
  }
  return part;
}

double CentroidPartition::gamma_eff() const {
  return static_cast<double>(valid_centroids.size()) /
         static_cast<double>(centroids.size());
}

std::string CentroidPartition::to_json_text() const {
  nlohmann::json j{{"seed", derivation_seed},
                   {"gamma", gamma},
                   {"centroids", centroids}};
  return j.dump();
}

CentroidPartition CentroidPartition::from_json_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  return make(j.at("centroids").get<std::vector<Embedding>>(),
              j.at("seed").get<std::uint64_t>(), j.at("gamma").get<double>());
}

std::size_t nearest_centroid(const Embedding& v,
                             const std::vector<Embedding>& centroids) {
  if (centroids.empty()) {
    throw std::invalid_argument("nearest_centroid: no centroids");
  }
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    if (centroids[i].size() != v.size()) {
      throw std::invalid_argument("nearest_centroid: dimension mismatch");
    }
    const double dist = squared_distance(v, centroids[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

RegionAssignment assign_centroid_region(const Embedding& v,
                                        const CentroidPartition& part) {
  const std::size_t idx = nearest_centroid(v, part.centroids);
  return RegionAssignment{idx, part.valid_mask[idx] != 0};
}

std::vector<Embedding> fit_centroids(const std::vector<Embedding>& points,
                                     std::size_t k, std::uint64_t seed,
                                     std::size_t max_iters, double tol) {
  if (k == 0) throw std::invalid_argument("fit_centroids: k must be >= 1");
  if (points.size() < k) {
    throw std::invalid_argument("fit_centroids: fewer points than centroids");
  }
  const std::size_t h = points.front().size();
  for (const auto& p : points) {
    if (p.size() != h) {
      throw std::invalid_argument("fit_centroids: mixed dimensions");
    }
  }

  // Seeded init: walk a shuffled index order, preferring unseen values so
  // duplicated inputs do not produce coincident centroids when avoidable.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const std::size_t j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  std::vector<Embedding> centroids;
  std::set<Embedding> chosen;
  for (std::size_t idx : order) {
    if (centroids.size() == k) break;
    if (chosen.insert(points[idx]).second) centroids.push_back(points[idx]);
  }
  for (std::size_t idx : order) {
    if (centroids.size() == k) break;
    centroids.push_back(points[idx]);  // duplicates unavoidable
  }

  std::vector<std::size_t> assignment(points.size(), 0);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      assignment[i] = nearest_centroid(points[i], centroids);
    }

    std::vector<Embedding> sums(k, Embedding(h, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = assignment[i];
      for (std::size_t dim = 0; dim < h; ++dim) sums[c][dim] += points[i][dim];
      ++counts[c];
    }

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed to the point farthest from its assigned centroid, moving it
        // out of a cluster that can spare it.
        std::size_t far = points.size();
        double far_dist = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const std::size_t old = assignment[i];
          if (counts[old] < 2) continue;
          const double dist = squared_distance(points[i], centroids[old]);
          if (dist > far_dist) {
            far_dist = dist;
            far = i;
          }
        }
        if (far == points.size()) continue;  // every cluster is a singleton
        const std::size_t old = assignment[far];
        for (std::size_t dim = 0; dim < h; ++dim) {
          sums[old][dim] -= points[far][dim];
        }
        --counts[old];
        sums[c] = points[far];
        counts[c] = 1;
        assignment[far] = c;
      }
    }

    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // unreseedable; keep the old centroid
      Embedding next(h);
      for (std::size_t dim = 0; dim < h; ++dim) {
        next[dim] = sums[c][dim] / static_cast<double>(counts[c]);
      }
      max_shift = std::max(max_shift,
                           std::sqrt(squared_distance(next, centroids[c])));
      centroids[c] = std::move(next);
    }
    if (max_shift < tol) break;
  }
  return centroids;
}

}  // namespace seqmark
