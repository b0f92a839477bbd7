#pragma once

/**
 * Experiment orchestration: config parsing/validation, hyperparameter
 * sweeps, diagnostics runs, and JSONL persistence.
 *
 * A sweep enumerates, per scheme, the cross product of that scheme's
 * relevant grid axes, runs `trials` watermarked generations plus the
 * configured negatives per cell, detects everything with the true key, and
 * writes three artifacts under output_path:
 *
 *   records.jsonl   one JSON object per line: generation, detection, and
 *                   metric records, each tagged with cell id, role, params,
 *                   and the config digest
 *   summary.json    per-cell metric rows plus pareto frontiers
 *   pareto.csv      plot-ready (scheme, negative, cell, quality, f1) rows
 *
 * Outputs are a pure function of (config, seed): cells may execute on a
 * thread pool, but records are emitted in cell order, so two runs of the
 * same config are byte-identical except for the "ts" timestamp fields.
 */

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seqmark/detect.hpp"
#include "seqmark/remote.hpp"
#include "seqmark/samplers.hpp"
#include "seqmark/watermark.hpp"

namespace seqmark {

enum class TaskKind {
  ConstrainedSingleCluster,
  ConstrainedFewCluster,
  OpenEndedManyCluster,
  TokenLm,
  Remote,
};

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

struct SweepGrid {
  std::vector<double> temperature{0.7, 0.85, 1.0, 1.2, 1.5};
  std::vector<double> gamma{0.1, 0.25, 0.5, 0.75};
  std::vector<double> delta_bias{0.1, 0.5, 1.0, 2.0, 4.0};
  std::vector<std::size_t> lsh_dim{2, 3, 4, 5};
  std::vector<std::size_t> centroid_count{8};
  std::vector<std::size_t> max_rejections{16};
  std::vector<std::size_t> manifold_samples{50};
};

struct ExperimentConfig {
  int schema_version = 1;
  TaskKind task = TaskKind::ConstrainedSingleCluster;
  std::vector<Scheme> schemes{Scheme::SeqMark};
  SweepGrid grid;

  // Synthetic embedding model.
  std::size_t embed_dim = 32;
  double residual_delta = 0.1;

  // Synthetic token model.
  std::size_t vocab_size = 1000;
  std::string token_task = "uniform";  // "uniform" | "peaked"
  double peak_margin_nats = 8.0;
  double entropy_knob = 0.0;

  std::size_t trials = 8;
  std::size_t sentences_per_generation = 1;
  std::size_t tokens_per_generation = 200;
  std::vector<std::string> negatives{"unwatermarked_sampler"};

  std::uint64_t seed = 1;
  std::uint64_t key = 1;
  double z_threshold = 2.0;
  double mean_temperature = 1.0;
  double entropy_threshold = 0.69;
  std::string transform = "sample_mean";

  std::string output_path = "out";
  std::size_t parallelism = 2;
  std::optional<RemoteEndpoint> remote;

  void validate() const;
  // Canonical (key-sorted) serialization; digest is stable under input field
  // reordering.
  std::string to_json_text() const;
  std::uint64_t digest() const;
  // Strict parse: unknown fields are rejected.
  static ExperimentConfig from_json_text(std::string_view text);
  static ExperimentConfig load(const std::string& path);
};

// The scheme's WatermarkConfig for one grid cell.
struct CellParams {
  Scheme scheme = Scheme::SeqMark;
  double temperature = 1.0;
  double gamma = 0.25;
  double delta_bias = 2.0;
  std::size_t lsh_dim = 3;
  std::size_t centroid_count = 8;
  std::size_t max_rejections = 16;
  std::size_t manifold_samples = 50;
};

std::vector<CellParams> enumerate_cells(const ExperimentConfig& cfg);
WatermarkConfig cell_watermark_config(const ExperimentConfig& cfg,
                                      const CellParams& cell);

// Task model factories. Cluster tasks ignore the prompt; remote binds it.
std::shared_ptr<CandidateSource> make_task_sampler(const ExperimentConfig& cfg,
                                                   const std::string& prompt);
TokenModel make_token_model(const ExperimentConfig& cfg);

// Centroids for KSemStamp, fitted on draws from the broad "general manifold"
// model (the open-ended many-cluster task) rather than the task's own output
// distribution, mirroring offline pretraining.
std::vector<Embedding> fit_general_centroids(const ExperimentConfig& cfg,
                                             std::size_t k);

// JSONL payload serializers (canonical key order).
std::string generation_to_json(const GenerationResult& result);
std::string generation_to_json(const TokenGenerationResult& result);
std::string detection_to_json(const DetectionResult& result);

struct SweepOutput {
  std::string records_path;
  std::string summary_path;
  std::string pareto_path;
  std::size_t cells = 0;
  std::size_t generation_records = 0;
  std::size_t detection_records = 0;
  std::size_t metric_records = 0;
};
SweepOutput run_sweep(const ExperimentConfig& cfg);

struct DiagnoseOutput {
  std::string summary_path;
  std::string csv_path;
  bool all_passed = false;
};
// Region entropy of the task's high-likelihood samples under raw LSH,
// general-manifold k-means, and mean-centered LSH, plus the theory checks.
DiagnoseOutput run_diagnose(const ExperimentConfig& cfg);

struct TheoryOutput {
  std::string summary_path;
  bool all_passed = false;
};
TheoryOutput run_verify_theory(const ExperimentConfig& cfg);

// One generation with the head-of-grid cell, written as a generation record.
std::string run_generate_once(const ExperimentConfig& cfg,
                              const std::string& prompt,
                              const std::string& output_path);

// Input: JSONL lines {"prompt": "...", "sentences": ["...", ...]}. Writes one
// detection record (or per-line error record) per input line; returns 0 iff
// every line parsed.
int run_detect_file(const std::string& input_path, const ExperimentConfig& cfg,
                    const std::string& output_path);

}  // namespace seqmark
