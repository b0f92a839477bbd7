#include "doctest.h"

#include <stdexcept>

#include <cmath>

#include "seqmark/detect.hpp"
#include "seqmark/watermark.hpp"

using namespace seqmark;

namespace {

ClusterModel single_cluster(std::size_t h, double delta, std::uint64_t dir_seed = 1) {
  Rng rng(dir_seed);
  Embedding dir = normal_vector(rng, h);
  return ClusterModel(h, {{dir, 1.0, delta}});
}

ClusterModel isotropic_model(std::size_t h, double delta = 0.0,
                             std::size_t clusters = 64, std::uint64_t seed = 2) {
  Rng rng(seed);
  std::vector<ClusterSpec> specs;
  for (std::size_t k = 0; k < clusters; ++k) {
    specs.push_back({normal_vector(rng, h), 1.0, delta});
  }
  return ClusterModel(h, std::move(specs));
}

WatermarkConfig base_config(Scheme scheme) {
  WatermarkConfig cfg;
  cfg.scheme = scheme;
  cfg.key = SecretKey{42};
  cfg.gamma = 0.25;
  cfg.lsh_dim = 3;
  cfg.max_rejections = 16;
  cfg.manifold_samples = 16;
  return cfg;
}

TokenModel uniform_tokens(std::size_t vocab) {
  TokenModel model;
  model.vocab_size = vocab;
  model.base_logits = [vocab](const std::vector<int>&) {
    return std::vector<double>(vocab, 0.0);
  };
  return model;
}

bool step_records_equal(const StepRecord& a, const StepRecord& b) {
  return a.region == b.region && a.region_bits == b.region_bits &&
         a.valid == b.valid && a.rejections_used == b.rejections_used &&
         a.quality == b.quality && a.degenerate == b.degenerate;
}

}  // namespace

TEST_CASE("constructed acceptance: d = 1, candidate forced into the valid half") {
  // delta = 0 makes every candidate identical, so its signature is fixed.
  // Pick the key whose step-0 partition marks that signature valid.
  WatermarkConfig cfg = base_config(Scheme::SemStamp);
  cfg.lsh_dim = 1;
  cfg.gamma = 0.5;
  const ClusterModel model = single_cluster(8, 0.0);

  bool found = false;
  for (std::uint64_t key = 1; key < 64 && !found; ++key) {
    cfg.key = SecretKey{key};
    const HyperplaneSet planes = HyperplaneSet::generate(hyperplane_seed(cfg.key), 1, 8);
    const Signature sig = lsh_signature(model.cluster(0).direction, planes);
    const RegionPartition part = RegionPartition::make(
        derive_step_seed(cfg.key, fnv1a64("p"), 0), 1, 0.5);
    if (part.is_valid(sig)) {
      found = true;
      const GenerationResult gen = generate_semstamp("p", 1, cfg, model);
      REQUIRE(gen.per_step.size() == 1);
      CHECK(gen.per_step[0].valid);
      CHECK(gen.per_step[0].rejections_used == 0);
    }
  }
  CHECK(found);
}

TEST_CASE("budget exhaustion emits the last candidate unwatermarked") {
  WatermarkConfig cfg = base_config(Scheme::SemStamp);
  cfg.lsh_dim = 1;
  cfg.gamma = 0.5;
  cfg.max_rejections = 1;
  const ClusterModel model = single_cluster(8, 0.0);

  bool found = false;
  for (std::uint64_t key = 1; key < 64 && !found; ++key) {
    cfg.key = SecretKey{key};
    const HyperplaneSet planes = HyperplaneSet::generate(hyperplane_seed(cfg.key), 1, 8);
    const Signature sig = lsh_signature(model.cluster(0).direction, planes);
    const RegionPartition part = RegionPartition::make(
        derive_step_seed(cfg.key, fnv1a64("p"), 0), 1, 0.5);
    if (!part.is_valid(sig)) {
      found = true;
      const GenerationResult gen = generate_semstamp("p", 1, cfg, model);
      REQUIRE(gen.sentences.size() == 1);
      REQUIRE(gen.per_step.size() == 1);
      CHECK_FALSE(gen.per_step[0].valid);
      CHECK(gen.per_step[0].rejections_used == 1);
    }
  }
  CHECK(found);
}

TEST_CASE("generation is deterministic end to end") {
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig cfg = base_config(Scheme::SeqMark);
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);

  const GenerationResult a = generate_seqmark("prompt x", 3, cfg, model, oracle);
  const GenerationResult b = generate_seqmark("prompt x", 3, cfg, model, oracle);
  CHECK(a.sentences == b.sentences);
  REQUIRE(a.per_step.size() == b.per_step.size());
  for (std::size_t i = 0; i < a.per_step.size(); ++i) {
    CHECK(step_records_equal(a.per_step[i], b.per_step[i]));
  }

  const GenerationResult c = generate_seqmark("prompt y", 3, cfg, model, oracle);
  CHECK(a.sentences != c.sentences);
}

TEST_CASE("SeqMark with identity transform is bit-identical to SemStamp") {
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig seqmark_cfg = base_config(Scheme::SeqMark);
  seqmark_cfg.transform = TransformSpec::identity();
  WatermarkConfig semstamp_cfg = base_config(Scheme::SemStamp);
  const MeanProvider oracle = MeanProvider::resample_oracle(seqmark_cfg.key);

  // Identity bypasses the mean provider entirely, so the two schemes share
  // every seed stream.
  const GenerationResult a = generate_seqmark("p", 4, seqmark_cfg, model, oracle);
  const GenerationResult b = generate_semstamp("p", 4, semstamp_cfg, model);
  CHECK(a.sentences == b.sentences);
  REQUIRE(a.per_step.size() == b.per_step.size());
  for (std::size_t i = 0; i < a.per_step.size(); ++i) {
    CHECK(step_records_equal(a.per_step[i], b.per_step[i]));
  }
}

TEST_CASE("region collapse: tight cluster accepted at roughly the chance rate") {
  // With a near-zero residual every candidate shares one signature, so
  // acceptance-within-budget is decided once per key at rate gamma_eff.
  const ClusterModel model = single_cluster(16, 1e-6);
  WatermarkConfig cfg = base_config(Scheme::SemStamp);
  int accepted = 0;
  const int keys = 300;
  for (int k = 0; k < keys; ++k) {
    cfg.key = SecretKey{seed_seq({1000, static_cast<std::uint64_t>(k)})};
    const GenerationResult gen = generate_semstamp("p", 1, cfg, model);
    accepted += gen.per_step[0].valid;
  }
  const double rate = static_cast<double>(accepted) / keys;
  const double sigma = std::sqrt(0.25 * 0.75 / keys);
  CHECK(std::abs(rate - 0.25) <= 4 * sigma);
}

TEST_CASE("isotropic sampler at d = 1 rejects about once per acceptance") {
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig cfg = base_config(Scheme::SemStamp);
  cfg.lsh_dim = 1;
  cfg.gamma = 0.5;
  cfg.max_rejections = 40;

  double rejections = 0.0;
  int steps = 0;
  for (int p = 0; p < 400; ++p) {
    const GenerationResult gen =
        generate_semstamp("p" + std::to_string(p), 1, cfg, model);
    REQUIRE(gen.per_step[0].valid);  // budget 40 at p = 0.5 never exhausts here
    rejections += gen.per_step[0].rejections_used;
    ++steps;
  }
  // Geometric with p = 1/2: mean rejections before success is 1.
  CHECK(rejections / steps == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("emitted-step validity invariant and detector round trip") {
  const ClusterModel model = isotropic_model(16, 0.05);
  const MeanProvider oracle = MeanProvider::resample_oracle(SecretKey{42});
  for (Scheme scheme : {Scheme::SeqMark, Scheme::SemStamp}) {
    WatermarkConfig cfg = base_config(scheme);
    for (int p = 0; p < 25; ++p) {
      const std::string prompt = "rt" + std::to_string(p);
      const GenerationResult gen =
          scheme == Scheme::SeqMark
              ? generate_seqmark(prompt, 3, cfg, model, oracle)
              : generate_semstamp(prompt, 3, cfg, model);
      for (const auto& step : gen.per_step) {
        if (step.rejections_used < cfg.max_rejections) CHECK(step.valid);
      }
      const DetectionResult det =
          detect_sequence(gen.sentences, prompt, cfg, model, oracle);
      REQUIRE(det.per_step.size() == gen.per_step.size());
      std::size_t valid_total = 0;
      for (std::size_t t = 0; t < det.per_step.size(); ++t) {
        CHECK(det.per_step[t].valid == gen.per_step[t].valid);
        CHECK(det.per_step[t].region == gen.per_step[t].region);
        valid_total += gen.per_step[t].valid;
      }
      CHECK(det.valid == valid_total);
    }
  }
}

TEST_CASE("zero-entropy task degenerates to unwatermarkable fallbacks") {
  // A singleton manifold mean-centers every candidate to the zero vector;
  // every step must fall back and be recorded degenerate + invalid.
  const ClusterModel model = single_cluster(8, 0.0);
  WatermarkConfig cfg = base_config(Scheme::SeqMark);
  cfg.max_rejections = 4;
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);
  const GenerationResult gen = generate_seqmark("p", 2, cfg, model, oracle);
  for (const auto& step : gen.per_step) {
    CHECK_FALSE(step.valid);
    CHECK(step.degenerate);
    CHECK(step.rejections_used == cfg.max_rejections);
  }
  // Detection agrees bit for bit.
  const DetectionResult det = detect_sequence(gen.sentences, "p", cfg, model, oracle);
  CHECK(det.valid == 0);
  for (const auto& step : det.per_step) CHECK(step.degenerate);
}

TEST_CASE("k-SemStamp: exact centroid hit and constructed two-cluster case") {
  std::vector<Embedding> centroids{{1, 0}, {-1, 0}};
  WatermarkConfig cfg = base_config(Scheme::KSemStamp);
  cfg.centroid_count = 2;
  cfg.gamma = 0.5;

  // Two tight clusters sitting exactly on the two centroids.
  ClusterModel model(2, {{Embedding{1, 0}, 0.5, 1e-9}, {Embedding{-1, 0}, 0.5, 1e-9}});
  const GenerationResult gen = generate_ksemstamp("p", 1, cfg, model, centroids);
  REQUIRE(gen.per_step.size() == 1);
  // With one valid centroid of two and both clusters reachable, the sampler
  // should find the valid one within budget.
  CHECK(gen.per_step[0].valid);
  CHECK(gen.per_step[0].region_bits.empty());

  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);
  const DetectionResult det =
      detect_sequence(gen.sentences, "p", cfg, model, oracle, &centroids);
  CHECK(det.valid == 1);
}

TEST_CASE("k-SemStamp collapses when all candidates share a centroid") {
  // Centroids fitted on a single tight cluster all coincide; the tie rule
  // sends every candidate to centroid 0 and acceptance is one coin per key.
  const ClusterModel model = single_cluster(8, 0.0);
  std::vector<Embedding> points;
  for (std::uint64_t i = 0; i < 32; ++i) {
    points.push_back(model.sample(1.0, seed_seq({5, i})).embedding);
  }
  const std::vector<Embedding> centroids = fit_centroids(points, 8, 3);

  WatermarkConfig cfg = base_config(Scheme::KSemStamp);
  cfg.centroid_count = 8;
  cfg.gamma = 0.25;
  int accepted = 0;
  const int keys = 300;
  for (int k = 0; k < keys; ++k) {
    cfg.key = SecretKey{seed_seq({2000, static_cast<std::uint64_t>(k)})};
    const GenerationResult gen = generate_ksemstamp("p", 1, cfg, model, centroids);
    accepted += gen.per_step[0].valid;
  }
  const double rate = static_cast<double>(accepted) / keys;
  const double sigma = std::sqrt(0.25 * 0.75 / keys);
  CHECK(std::abs(rate - 0.25) <= 4 * sigma);
}

TEST_CASE("KGW: unbiased green rate, saturation, and a real bias push") {
  const TokenModel model = uniform_tokens(500);
  WatermarkConfig cfg = base_config(Scheme::KGW);
  cfg.scheme = Scheme::KGW;
  cfg.gamma = 0.25;

  auto green_fraction = [&](double bias, const std::string& prompt) {
    WatermarkConfig c = cfg;
    c.delta_bias = bias;
    const TokenGenerationResult gen = generate_kgw(prompt, 400, c, model);
    double green = 0;
    for (auto g : gen.green) green += g;
    return green / static_cast<double>(gen.green.size());
  };

  CHECK(green_fraction(0.0, "a") == doctest::Approx(0.25).epsilon(0.35));
  CHECK(green_fraction(1e6, "b") == doctest::Approx(1.0));

  // delta = 2 on a uniform model: per-step green probability is
  // g*e^2 / (g*e^2 + 1 - g) ~= 0.711; the CI over 400 tokens excludes 0.25.
  const double pushed = green_fraction(2.0, "c");
  CHECK(pushed > 0.6);
  CHECK(pushed < 0.85);
}

TEST_CASE("SWEET: threshold 0 equals KGW; threshold inf equals unwatermarked") {
  const TokenModel model = uniform_tokens(200);
  WatermarkConfig kgw_cfg = base_config(Scheme::KGW);
  kgw_cfg.scheme = Scheme::KGW;
  WatermarkConfig sweet_cfg = kgw_cfg;
  sweet_cfg.scheme = Scheme::SWEET;

  sweet_cfg.entropy_threshold = 0.0;
  const TokenGenerationResult kgw = generate_kgw("p", 300, kgw_cfg, model);
  const TokenGenerationResult sweet0 = generate_sweet("p", 300, sweet_cfg, model);
  CHECK(kgw.tokens == sweet0.tokens);

  sweet_cfg.entropy_threshold = std::numeric_limits<double>::infinity();
  const TokenGenerationResult sweet_inf = generate_sweet("p", 300, sweet_cfg, model);
  const TokenSequence plain = sample_token_sequence(
      model, 300, sweet_cfg.emit_temperature, std::nullopt,
      token_stream_seed(sweet_cfg.key, fnv1a64("p")));
  CHECK(sweet_inf.tokens == plain.tokens);
  for (auto b : sweet_inf.biased) CHECK(b == 0);
}

TEST_CASE("SWEET on a near-deterministic model watermarks almost nothing") {
  TokenModel peaked;
  peaked.vocab_size = 100;
  peaked.base_logits = [](const std::vector<int>& prefix) {
    std::vector<double> l(100, -40.0);
    const std::size_t top = prefix.empty() ? 3 : (prefix.back() * 31 + 3) % 100;
    l[top] = 9.0;
    l[(top + 7) % 100] = 0.0;
    return l;
  };
  WatermarkConfig cfg = base_config(Scheme::SWEET);
  cfg.scheme = Scheme::SWEET;
  cfg.entropy_threshold = 0.69;
  const TokenGenerationResult gen = generate_sweet("p", 300, cfg, peaked);
  double biased = 0;
  for (auto b : gen.biased) biased += b;
  CHECK(biased / 300.0 < 0.02);
}

TEST_CASE("fallback emission: last candidate by default, best reject on request") {
  // Two clusters with distinct qualities; a 1-valid-of-2 centroid partition
  // whose valid centroid is unreachable forces every step to fall back.
  ClusterModel model(2, {{Embedding{1, 0}, 0.75, 1e-9}, {Embedding{0.9, 0.1}, 0.25, 1e-9}});
  std::vector<Embedding> centroids{{1, 0}, {-1, 0}};  // nobody lands near -e1

  WatermarkConfig cfg = base_config(Scheme::KSemStamp);
  cfg.centroid_count = 2;
  cfg.gamma = 0.5;
  cfg.max_rejections = 6;

  // Find a key whose step-0 partition blocks centroid 0.
  std::uint64_t blocked_key = 0;
  for (std::uint64_t key = 1; key < 64; ++key) {
    const auto part = CentroidPartition::make(
        centroids, derive_step_seed(SecretKey{key}, fnv1a64("p"), 0), 0.5);
    if (!part.valid_mask[0]) {
      blocked_key = key;
      break;
    }
  }
  REQUIRE(blocked_key != 0);
  cfg.key = SecretKey{blocked_key};

  const GenerationResult last = generate_ksemstamp("p", 1, cfg, model, centroids);
  REQUIRE_FALSE(last.per_step[0].valid);
  CHECK(last.per_step[0].rejections_used == 6);
  // Last draw's quality: whatever candidate came out sixth.
  const Candidate sixth =
      model.sample(cfg.emit_temperature, emission_seed(cfg.key, fnv1a64("p"), 0, 6));
  CHECK(last.per_step[0].quality == sixth.quality);
  CHECK(last.sentences[0] == sixth.text);

  cfg.emit_best_rejected = true;
  const GenerationResult best = generate_ksemstamp("p", 1, cfg, model, centroids);
  REQUIRE_FALSE(best.per_step[0].valid);
  // Best reject is the highest-weight cluster seen in the six draws.
  double best_quality = -1.0;
  for (std::uint32_t attempt = 1; attempt <= 6; ++attempt) {
    best_quality = std::max(
        best_quality,
        model.sample(cfg.emit_temperature, emission_seed(cfg.key, fnv1a64("p"), 0, attempt))
            .quality);
  }
  CHECK(best.per_step[0].quality == best_quality);
}

TEST_CASE("config validation rejects scheme-incoherent settings") {
  WatermarkConfig cfg = base_config(Scheme::SeqMark);
  cfg.gamma = 0.05;  // floor(0.05 * 8) = 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = base_config(Scheme::SeqMark);
  cfg.manifold_samples = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = base_config(Scheme::KSemStamp);
  cfg.centroid_count = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = base_config(Scheme::SemStamp);
  cfg.max_rejections = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  CHECK_THROWS_AS(generate_semstamp("p", 0, base_config(Scheme::SemStamp),
                                    single_cluster(8, 0.1)),
                  std::invalid_argument);
}

TEST_CASE("quality stays near baseline when regions are well spread") {
  // Isotropic many-cluster model with varied weights: rejection sampling
  // filters on geometry, not quality, so mean emitted quality matches the
  // sampler's own mean within Monte Carlo noise.
  Rng rng(8);
  std::vector<ClusterSpec> specs;
  for (int k = 0; k < 32; ++k) {
    specs.push_back({normal_vector(rng, 16), 0.5 + rng.uniform01(), 0.02});
  }
  const ClusterModel model(16, std::move(specs));

  double baseline = 0.0;
  const int n = 3000;
  for (int i = 0; i < n; ++i) {
    baseline += model.sample(1.0, seed_seq({17, static_cast<std::uint64_t>(i)})).quality;
  }
  baseline /= n;

  WatermarkConfig cfg = base_config(Scheme::SemStamp);
  double marked = 0.0;
  const int prompts = 1500;
  for (int p = 0; p < prompts; ++p) {
    marked += generate_semstamp("q" + std::to_string(p), 1, cfg, model)
                  .per_step[0].quality;
  }
  marked /= prompts;
  CHECK(marked == doctest::Approx(baseline).epsilon(0.05));
}
