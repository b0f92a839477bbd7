#include "seqmark/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace seqmark {

namespace {

void require_same_dim(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("embedding dimension mismatch: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

}  // namespace

double dot(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Embedding& v) { return std::sqrt(dot(v, v)); }

Embedding subtract(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  Embedding out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Embedding add(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  Embedding out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Embedding scale(const Embedding& v, double factor) {
  Embedding out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return out;
}

bool all_finite(const Embedding& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double angle_between(const Embedding& a, const Embedding& b) {
  return std::acos(cosine_similarity(a, b));
}

Signature Signature::from_bits(std::string bits) {
  if (bits.empty() || bits.size() > 63) {
    throw std::invalid_argument("signature length must be in [1, 63]");
  }
  std::uint64_t value = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("signature bits must be '0'/'1'");
    }
    value = (value << 1) | static_cast<std::uint64_t>(c == '1');
  }
  return Signature{std::move(bits), value};
}

Signature Signature::from_value(std::uint64_t value, std::size_t d) {
  if (d == 0 || d > 63) {
    throw std::invalid_argument("signature length must be in [1, 63]");
  }
  if (d < 64 && (value >> d) != 0) {
    throw std::invalid_argument("signature value does not fit in d bits");
  }
  std::string bits(d, '0');
  for (std::size_t i = 0; i < d; ++i) {
    if ((value >> (d - 1 - i)) & 1ull) bits[i] = '1';
  }
  return Signature{std::move(bits), value};
}

HyperplaneSet HyperplaneSet::generate(std::uint64_t seed, std::size_t d,
                                      std::size_t h) {
  if (d == 0 || d > 63) {
    throw std::invalid_argument("hyperplane count d must be in [1, 63]");
  }
  if (h == 0) {
    throw std::invalid_argument("embedding dimension h must be >= 1");
  }
  HyperplaneSet planes;
  planes.seed = seed;
  planes.dim_d = d;
  planes.embed_dim_h = h;
  planes.normals.reserve(d);
  Rng rng(seed);
  for (std::size_t i = 0; i < d; ++i) {
    planes.normals.push_back(normal_vector(rng, h));
  }
  return planes;
}

std::string HyperplaneSet::to_json_text() const {
  nlohmann::json j{{"seed", seed}, {"d", dim_d}, {"h", embed_dim_h}};
  return j.dump();
}

HyperplaneSet HyperplaneSet::from_json_text(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  return generate(j.at("seed").get<std::uint64_t>(),
                  j.at("d").get<std::size_t>(), j.at("h").get<std::size_t>());
}

Signature lsh_signature(const Embedding& v, const HyperplaneSet& planes) {
  if (v.size() != planes.embed_dim_h) {
    throw std::invalid_argument("lsh_signature: dimension mismatch");
  }
  std::string bits(planes.dim_d, '0');
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < planes.dim_d; ++i) {
    const bool side = dot(planes.normals[i], v) >= 0.0;
    if (side) bits[i] = '1';
    value = (value << 1) | static_cast<std::uint64_t>(side);
  }
  return Signature{std::move(bits), value};
}

double collision_probability(double theta, std::size_t d) {
  constexpr double pi = 3.141592653589793238462643383279502884;
  if (!(theta >= 0.0 && theta <= pi)) {
    throw std::invalid_argument("collision_probability: theta outside [0, pi]");
  }
  if (d == 0) {
    throw std::invalid_argument("collision_probability: d must be >= 1");
  }
  return std::pow(1.0 - theta / pi, static_cast<double>(d));
}

}  // namespace seqmark
