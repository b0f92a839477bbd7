// Microbenchmarks for the hot paths: signature hashing, partition
// derivation, candidate sampling, full generation steps, and the metric
// kernels. Run ./seqmark_bench; add --benchmark_filter=... to focus.

#include <benchmark/benchmark.h>

#include "seqmark/detect.hpp"
#include "seqmark/diagnostics.hpp"
#include "seqmark/watermark.hpp"

using namespace seqmark;

namespace {

ClusterModel bench_model(std::size_t h) {
  Rng rng(1);
  std::vector<ClusterSpec> specs;
  for (int k = 0; k < 16; ++k) specs.push_back({normal_vector(rng, h), 1.0, 0.1});
  return ClusterModel(h, std::move(specs));
}

void BM_lsh_signature(benchmark::State& state) {
  const std::size_t h = static_cast<std::size_t>(state.range(0));
  const HyperplaneSet planes = HyperplaneSet::generate(3, 4, h);
  Rng rng(2);
  const Embedding v = normal_vector(rng, h);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lsh_signature(v, planes));
  }
}
BENCHMARK(BM_lsh_signature)->Arg(32)->Arg(256)->Arg(768);

void BM_region_partition(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(RegionPartition::make(++seed, d, 0.25));
  }
}
BENCHMARK(BM_region_partition)->Arg(3)->Arg(5)->Arg(10);

void BM_vocab_green_list(benchmark::State& state) {
  const std::uint64_t vocab = static_cast<std::uint64_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(partition_mask(++seed, vocab, 0.25));
  }
}
BENCHMARK(BM_vocab_green_list)->Arg(1000)->Arg(32000);

void BM_cluster_sample(benchmark::State& state) {
  const ClusterModel model = bench_model(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.sample(1.0, ++seed));
  }
}
BENCHMARK(BM_cluster_sample)->Arg(32)->Arg(256);

void BM_generate_seqmark_step(benchmark::State& state) {
  const ClusterModel model = bench_model(32);
  WatermarkConfig cfg;
  cfg.scheme = Scheme::SeqMark;
  cfg.key = SecretKey{5};
  cfg.manifold_samples = 50;
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);
  std::uint64_t p = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        generate_seqmark("p" + std::to_string(++p), 1, cfg, model, oracle));
  }
}
BENCHMARK(BM_generate_seqmark_step);

void BM_detect_sequence(benchmark::State& state) {
  const ClusterModel model = bench_model(32);
  WatermarkConfig cfg;
  cfg.scheme = Scheme::SeqMark;
  cfg.key = SecretKey{5};
  cfg.manifold_samples = 50;
  const MeanProvider oracle = MeanProvider::resample_oracle(cfg.key);
  const GenerationResult gen = generate_seqmark("p", 4, cfg, model, oracle);
  for (auto _ : state) {
    benchmark::DoNotOptimize(detect_sequence(gen.sentences, "p", cfg, model, oracle));
  }
}
BENCHMARK(BM_detect_sequence);

void BM_region_entropy(benchmark::State& state) {
  const ClusteredDraw draw = draw_clustered_vectors(32, 100, 0.1, 3);
  const HyperplaneSet planes = HyperplaneSet::generate(9, 3, 32);
  const auto region = [&](const Embedding& v) { return lsh_signature(v, planes).value; };
  for (auto _ : state) {
    benchmark::DoNotOptimize(region_entropy(draw.vectors, region));
  }
}
BENCHMARK(BM_region_entropy);

void BM_auroc(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> pos(1000), neg(1000);
  for (auto& s : pos) s = rng.normal() + 1.0;
  for (auto& s : neg) s = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(auroc(pos, neg));
  }
}
BENCHMARK(BM_auroc);

}  // namespace

BENCHMARK_MAIN();
