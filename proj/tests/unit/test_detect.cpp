#include "doctest.h"

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <set>

#include "seqmark/detect.hpp"

using namespace seqmark;

namespace {

// Brute-force oracles, independent of the library implementations.

double oracle_auroc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double score = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      if (p > n) score += 1.0;
      else if (p == n) score += 0.5;
    }
  }
  return score / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double oracle_tpr_at_fpr(const std::vector<double>& pos,
                         const std::vector<double>& neg, double level) {
  std::set<double> thresholds(pos.begin(), pos.end());
  thresholds.insert(neg.begin(), neg.end());
  double best = -1.0;
  double best_thr = 0.0;
  for (double thr : thresholds) {
    std::size_t fp = 0, tp = 0;
    for (double s : neg) fp += (s >= thr);
    for (double s : pos) tp += (s >= thr);
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg.size());
    if (fpr <= level) {
      // The smallest qualifying threshold also maximizes TPR, but derive it
      // independently: among qualifying thresholds pick the max-TPR one
      // (ties broken toward the smaller threshold by iteration order).
      const double tpr = static_cast<double>(tp) / static_cast<double>(pos.size());
      if (tpr > best) {
        best = tpr;
        best_thr = thr;
      }
    }
  }
  (void)best_thr;
  return best < 0.0 ? 0.0 : best;
}

PrfReport oracle_prf(const std::vector<bool>& pred, const std::vector<bool>& label) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += (pred[i] && label[i]);
    fp += (pred[i] && !label[i]);
    fn += (!pred[i] && label[i]);
  }
  PrfReport r;
  r.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp / (tp + fn);
  r.f1 = (r.precision + r.recall) > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

ClusterModel isotropic_model(std::size_t h, std::uint64_t seed = 2) {
  Rng rng(seed);
  std::vector<ClusterSpec> specs;
  for (std::size_t k = 0; k < 64; ++k) {
    specs.push_back({normal_vector(rng, h), 1.0, 0.02});
  }
  return ClusterModel(h, std::move(specs));
}

}  // namespace

TEST_CASE("z_score hand values") {
  CHECK(z_score(25, 100, 0.25) == doctest::Approx(0.0));
  // (50 - 25) / sqrt(100 * 0.25 * 0.75) = 25 / sqrt(18.75)
  CHECK(z_score(50, 100, 0.25) == doctest::Approx(5.7735026919).epsilon(1e-9));
  CHECK(z_score(4, 4, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(z_score(1, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(z_score(1, 4, 0.0), std::invalid_argument);
}

TEST_CASE("classify thresholds") {
  CHECK(classify(2.0, 2.0));
  CHECK_FALSE(classify(1.9, 2.0));
}

TEST_CASE("detect_sequence round trip and empty input") {
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig cfg;
  cfg.scheme = Scheme::SeqMark;
  cfg.key = SecretKey{7};
  cfg.manifold_samples = 16;
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);

  const GenerationResult gen = generate_seqmark("pp", 4, cfg, model, oracle);
  const DetectionResult det = detect_sequence(gen.sentences, "pp", cfg, model, oracle);
  std::size_t valid = 0;
  for (const auto& s : gen.per_step) valid += s.valid;
  CHECK(det.valid == valid);
  CHECK(det.examined == 4);
  REQUIRE(det.z.has_value());

  CHECK_THROWS_AS(detect_sequence({}, "pp", cfg, model, oracle),
                  std::invalid_argument);
}

TEST_CASE("a generous rejection budget recovers D = M") {
  // With 64 attempts at per-draw acceptance 1/4, every step lands valid, so
  // detection with the same key counts all of them.
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig cfg;
  cfg.scheme = Scheme::SeqMark;
  cfg.key = SecretKey{8};
  cfg.manifold_samples = 16;
  cfg.max_rejections = 64;
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);
  for (int p = 0; p < 10; ++p) {
    const std::string prompt = "dm" + std::to_string(p);
    const GenerationResult gen = generate_seqmark(prompt, 4, cfg, model, oracle);
    const DetectionResult det =
        detect_sequence(gen.sentences, prompt, cfg, model, oracle);
    CHECK(det.valid == det.examined);
    REQUIRE(det.z.has_value());
    CHECK(det.decision);  // z = sqrt(M * (1 - g) / g) = sqrt(12) > 2
  }
}

TEST_CASE("independent key detects at the chance rate") {
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig gen_cfg;
  gen_cfg.scheme = Scheme::SemStamp;
  gen_cfg.key = SecretKey{101};
  WatermarkConfig det_cfg = gen_cfg;
  det_cfg.key = SecretKey{909};
  const MeanProvider det_oracle = MeanProvider::resample_oracle(det_cfg.key);

  int positive = 0;
  const int trials = 400;
  for (int i = 0; i < trials; ++i) {
    const std::string prompt = "n" + std::to_string(i);
    const GenerationResult gen = generate_semstamp(prompt, 1, gen_cfg, model);
    const DetectionResult det =
        detect_sequence(gen.sentences, prompt, det_cfg, model, det_oracle);
    positive += det.decision;
  }
  const double rate = static_cast<double>(positive) / trials;
  const double sigma = std::sqrt(0.25 * 0.75 / trials);
  CHECK(std::abs(rate - 0.25) <= 4 * sigma);
}

TEST_CASE("detect_kgw: all-green sequence gives z = 4") {
  // 17 tokens, 16 counted steps, gamma = 0.5, all green: (16-8)/2 = 4.
  TokenModel model;
  model.vocab_size = 32;
  model.base_logits = [](const std::vector<int>&) {
    return std::vector<double>(32, 0.0);
  };
  WatermarkConfig cfg;
  cfg.scheme = Scheme::KGW;
  cfg.key = SecretKey{3};
  cfg.gamma = 0.5;
  cfg.delta_bias = 1e6;
  const TokenGenerationResult gen = generate_kgw("p", 17, cfg, model);
  const DetectionResult det = detect_kgw(gen.tokens, cfg.key, 0.5, 32);
  CHECK(det.examined == 16);
  CHECK(det.valid == 16);
  REQUIRE(det.z.has_value());
  CHECK(*det.z == doctest::Approx(4.0));
  CHECK(det.decision);
}

TEST_CASE("detect_kgw error paths") {
  CHECK_THROWS_AS(detect_kgw({1}, SecretKey{1}, 0.5, 32), std::invalid_argument);
  // SWEET gating without a model.
  CHECK_THROWS_AS(detect_kgw({1, 2, 3}, SecretKey{1}, 0.5, 32, 2.0, nullptr, 0.5),
                  std::invalid_argument);

  // Threshold excluding every step signals the M = 0 condition.
  TokenModel onehot;
  onehot.vocab_size = 8;
  onehot.base_logits = [](const std::vector<int>&) {
    return std::vector<double>{100, 0, 0, 0, 0, 0, 0, 0};
  };
  CHECK_THROWS_AS(detect_kgw({0, 0, 0}, SecretKey{1}, 0.5, 8, 2.0, &onehot,
                             std::optional<double>(10.0), 1.0),
                  std::runtime_error);
}

TEST_CASE("unwatermarked z-scores have null mean and unit spread") {
  // Full KS calibration runs in the acceptance suite; sanity-check moments.
  TokenModel model;
  model.vocab_size = 100;
  model.base_logits = [](const std::vector<int>&) {
    return std::vector<double>(100, 0.0);
  };
  double sum = 0, sum_sq = 0;
  const int trials = 300;
  for (int i = 0; i < trials; ++i) {
    const TokenSequence seq = sample_token_sequence(
        model, 201, 1.0, std::nullopt, seed_seq({71, static_cast<std::uint64_t>(i)}));
    const DetectionResult det = detect_kgw(seq.tokens, SecretKey{55}, 0.25, 100);
    sum += *det.z;
    sum_sq += *det.z * *det.z;
  }
  const double mean = sum / trials;
  const double var = sum_sq / trials - mean * mean;
  CHECK(std::abs(mean) < 0.2);
  CHECK(std::abs(var - 1.0) < 0.35);
}

TEST_CASE("precision_recall_f1: endpoints and paper-style triple") {
  CHECK_THROWS_AS(precision_recall_f1({true}, {false}), std::invalid_argument);

  const PrfReport perfect =
      precision_recall_f1({true, false, true}, {true, false, true});
  CHECK(perfect.precision == doctest::Approx(1.0));
  CHECK(perfect.recall == doctest::Approx(1.0));
  CHECK(perfect.f1 == doctest::Approx(1.0));

  const PrfReport none =
      precision_recall_f1({false, false}, {true, false});
  CHECK(none.precision == doctest::Approx(0.0));
  CHECK(none.recall == doctest::Approx(0.0));
  CHECK(none.f1 == doctest::Approx(0.0));

  // P = 0.769, R = 0.773 must combine to F1 = 0.771 at table precision.
  const double p = 0.769, r = 0.773;
  const double f1 = 2 * p * r / (p + r);
  CHECK(f1 == doctest::Approx(0.771).epsilon(5e-4));
}

TEST_CASE("auroc: separability endpoints and the binary trapezoid") {
  CHECK(auroc({2, 3, 4}, {0, 1, 1.5}) == doctest::Approx(1.0));
  CHECK(auroc({1, 1, 1}, {1, 1}) == doctest::Approx(0.5));
  // Binary scores with TPR = 0.8, FPR = 0.2 -> area 0.8.
  std::vector<double> pos(10, 1.0), neg(10, 0.0);
  pos[0] = pos[1] = 0.0;
  neg[0] = neg[1] = 1.0;
  CHECK(auroc(pos, neg) == doctest::Approx(0.8));
}

TEST_CASE("metrics agree with brute-force oracles on random score sets") {
  Rng rng(88);
  for (int set = 0; set < 100; ++set) {
    const std::size_t np = 1 + rng.uniform_index(12);
    const std::size_t nn = 1 + rng.uniform_index(12);
    std::vector<double> pos(np), neg(nn);
    // Small integer support forces ties.
    for (auto& s : pos) s = static_cast<double>(rng.uniform_index(6));
    for (auto& s : neg) s = static_cast<double>(rng.uniform_index(6));

    CHECK(auroc(pos, neg) == doctest::Approx(oracle_auroc(pos, neg)).epsilon(1e-9));
    for (double level : {0.01, 0.05, 0.2, 0.5}) {
      CHECK(tpr_at_fpr(pos, neg, level) ==
            doctest::Approx(oracle_tpr_at_fpr(pos, neg, level)).epsilon(1e-12));
    }

    std::vector<bool> pred, label;
    for (std::size_t i = 0; i < np; ++i) {
      pred.push_back(rng.uniform01() < 0.5);
      label.push_back(true);
    }
    for (std::size_t i = 0; i < nn; ++i) {
      pred.push_back(rng.uniform01() < 0.5);
      label.push_back(false);
    }
    const PrfReport got = precision_recall_f1(pred, label);
    const PrfReport want = oracle_prf(pred, label);
    CHECK(got.precision == doctest::Approx(want.precision));
    CHECK(got.recall == doctest::Approx(want.recall));
    CHECK(got.f1 == doctest::Approx(want.f1));
  }
}

TEST_CASE("tpr_at_fpr: degenerate threshold layouts") {
  CHECK(tpr_at_fpr({5, 6, 7}, {1, 1, 1}, 0.01) == doctest::Approx(1.0));
  // All scores identical: any finite threshold has FPR = 1 > level.
  CHECK(tpr_at_fpr({1, 1}, {1, 1}, 0.05) == doctest::Approx(0.0));
}

TEST_CASE("perturb_embedding: exact angles and preserved norms") {
  Rng rng(5);
  const Embedding v = normal_vector(rng, 12);

  const Embedding same = perturb_embedding(v, 0.0, 9);
  CHECK(angle_between(v, same) == doctest::Approx(0.0).epsilon(1e-9));

  constexpr double pi = 3.141592653589793238462643383279502884;
  const Embedding flipped = perturb_embedding(v, pi, 9);
  CHECK(angle_between(v, flipped) == doctest::Approx(pi).epsilon(1e-6));

  const Embedding quarter = perturb_embedding(v, pi / 4, 9);
  CHECK(angle_between(v, quarter) == doctest::Approx(pi / 4).epsilon(1e-6));
  CHECK(norm(quarter) == doctest::Approx(norm(v)).epsilon(1e-9));

  CHECK_THROWS_AS(perturb_embedding(v, -0.5, 9), std::invalid_argument);
}

TEST_CASE("detection rate decays as perturbation angle grows") {
  // Simulated paraphrase attack: perturb watermarked embeddings by a growing
  // angle and re-detect. The hit rate must be non-increasing in the angle
  // (within Monte Carlo slack).
  const ClusterModel model = isotropic_model(16);
  WatermarkConfig cfg;
  cfg.scheme = Scheme::SemStamp;
  cfg.key = SecretKey{31};
  const HyperplaneSet planes =
      HyperplaneSet::generate(hyperplane_seed(cfg.key), cfg.lsh_dim, 16);

  constexpr double pi = 3.141592653589793238462643383279502884;
  std::vector<double> rates;
  for (double angle : {0.0, 0.35, 0.8, 1.5}) {
    int hits = 0;
    int accepted = 0;
    for (int i = 0; i < 300; ++i) {
      const std::string prompt = "atk" + std::to_string(i);
      const GenerationResult gen = generate_semstamp(prompt, 1, cfg, model);
      if (!gen.per_step[0].valid) continue;
      ++accepted;
      const Embedding emb = model.embed(gen.sentences[0]);
      const Embedding attacked =
          perturb_embedding(emb, angle, seed_seq({91, static_cast<std::uint64_t>(i)}));
      // Re-run the step-0 validity check on the perturbed embedding.
      const RegionPartition part = RegionPartition::make(
          derive_step_seed(cfg.key, fnv1a64(prompt), 0), cfg.lsh_dim, cfg.gamma);
      hits += part.is_valid(lsh_signature(attacked, planes));
    }
    REQUIRE(accepted > 100);
    rates.push_back(static_cast<double>(hits) / accepted);
  }
  (void)pi;
  for (std::size_t i = 1; i < rates.size(); ++i) {
    CHECK(rates[i] <= rates[i - 1] + 0.08);
  }
  CHECK(rates.back() < rates.front());
}
