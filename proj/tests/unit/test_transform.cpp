#include "doctest.h"

#include <stdexcept>

#include <cmath>

#include "seqmark/diagnostics.hpp"
#include "seqmark/transform.hpp"

using namespace seqmark;

TEST_CASE("sample_mean: singleton, symmetry, hand arithmetic") {
  CHECK(sample_mean(CandidateSet{{{2, 3}}}) == Embedding{2, 3});
  CHECK(sample_mean(CandidateSet{{{1, -2}, {-1, 2}}}) == Embedding{0, 0});
  // Mean of {[1,0],[0,1],[2,5]} = [1,2].
  const Embedding m = sample_mean(CandidateSet{{{1, 0}, {0, 1}, {2, 5}}});
  CHECK(m[0] == doctest::Approx(1.0));
  CHECK(m[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(sample_mean(CandidateSet{}), std::invalid_argument);
}

TEST_CASE("apply_transform: singleton collapse is degenerate") {
  const Embedding c{0.5, -0.25};
  const CandidateSet singleton{{c}};
  CHECK_FALSE(apply_transform(c, TransformSpec::sample_mean(), singleton).has_value());
}

TEST_CASE("apply_transform: zero-mean set passes through; identity is a no-op") {
  const Embedding a{1.5, -2.0};
  const CandidateSet sym{{a, scale(a, -1.0)}};
  const auto centered = apply_transform(a, TransformSpec::sample_mean(), sym);
  REQUIRE(centered.has_value());
  CHECK(*centered == a);

  const auto same = apply_transform(a, TransformSpec::identity(), CandidateSet{});
  REQUIRE(same.has_value());
  CHECK(*same == a);
}

TEST_CASE("transform_offset covers the ablation kinds") {
  const CandidateSet set{{{0, 0}, {4, 0}, {1.9, 0}}};
  // Mean (1.9667, 0); member closest to it is (1.9, 0).
  CHECK(transform_offset(TransformSpec::closest_to_mean(), set, 2) ==
        Embedding{1.9, 0});
  CHECK(transform_offset(TransformSpec::single_sample(), set, 2) ==
        Embedding{0, 0});
  const Embedding aux{3, 4};
  CHECK(transform_offset(TransformSpec::source_embedding(aux), set, 2) == aux);
  CHECK(transform_offset(TransformSpec::target_embedding(aux), set, 2) == aux);

  // Seeded random offset: reproducible, dimension h.
  const Embedding r1 = transform_offset(TransformSpec::random_embedding(5), set, 2);
  const Embedding r2 = transform_offset(TransformSpec::random_embedding(5), set, 2);
  const Embedding r3 = transform_offset(TransformSpec::random_embedding(6), set, 2);
  CHECK(r1 == r2);
  CHECK(r1 != r3);
  CHECK(r1.size() == 2);
}

TEST_CASE("TransformSpec validation and JSON round-trip") {
  CHECK_THROWS_AS((TransformSpec{TransformKind::SourceEmbedding, {}, {}}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((TransformSpec{TransformKind::RandomEmbedding, {}, {}}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((TransformSpec{TransformKind::SampleMean, Embedding{1}, {}}.validate()),
                  std::invalid_argument);

  const TransformSpec spec = TransformSpec::target_embedding({1, 2, 3});
  const TransformSpec back = TransformSpec::from_json_text(spec.to_json_text());
  CHECK(back.kind == TransformKind::TargetEmbedding);
  CHECK(*back.aux == Embedding{1, 2, 3});

  const TransformSpec r = TransformSpec::from_json_text(
      TransformSpec::random_embedding(77).to_json_text());
  CHECK(*r.aux_seed == 77);
}

TEST_CASE("mean_center_set: hand case and centering identity") {
  const CandidateSet two{{{1, 0}, {3, 0}}};
  const CandidateSet centered = mean_center_set(two);
  CHECK(centered.members[0] == Embedding{-1, 0});
  CHECK(centered.members[1] == Embedding{1, 0});

  const Embedding a{0.25, -4};
  const CandidateSet sym{{a, scale(a, -1.0)}};
  CHECK(mean_center_set(sym).members == sym.members);

  CHECK_THROWS_AS(mean_center_set(CandidateSet{{{1, 2}}}), std::invalid_argument);

  // Output mean is the zero vector for a random 50-member set.
  Rng rng(1);
  CandidateSet random_set;
  for (int i = 0; i < 50; ++i) random_set.members.push_back(normal_vector(rng, 8));
  const Embedding m = sample_mean(mean_center_set(random_set));
  for (double x : m) CHECK(std::abs(x) < 1e-9);
}

TEST_CASE("translation equivariance of mean-centering") {
  Rng rng(2);
  CandidateSet set;
  for (int i = 0; i < 10; ++i) set.members.push_back(normal_vector(rng, 6));
  const Embedding c = normal_vector(rng, 6);
  const Embedding b = normal_vector(rng, 6);

  CandidateSet shifted;
  for (const auto& m : set.members) shifted.members.push_back(add(m, b));

  const auto base = apply_transform(c, TransformSpec::sample_mean(), set);
  const auto moved = apply_transform(add(c, b), TransformSpec::sample_mean(), shifted);
  REQUIRE(base.has_value());
  REQUIRE(moved.has_value());
  for (std::size_t i = 0; i < base->size(); ++i) {
    CHECK((*base)[i] == doctest::Approx((*moved)[i]).epsilon(1e-9));
  }
}

TEST_CASE("centering cuts pairwise similarity on clustered candidate sets") {
  // c_i = mu + eps_i with |eps_i| <= 0.2: the centered set's mean pairwise
  // cosine drops below the raw set's in at least 99 of 100 seeded trials.
  int improved = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const ClusteredDraw draw = draw_clustered_vectors(32, 50, 0.2, seed_seq({404, trial}));
    const CandidateSet raw{draw.vectors};
    const CandidateSet centered = mean_center_set(raw);

    auto mean_cosine = [](const CandidateSet& s) {
      double sum = 0.0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = i + 1; j < s.size(); ++j) {
          sum += cosine_similarity(s.members[i], s.members[j]);
          ++pairs;
        }
      }
      return sum / static_cast<double>(pairs);
    };
    improved += mean_cosine(centered) < mean_cosine(raw);
  }
  CHECK(improved >= 99);
}
