#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biasbench/analysis.hpp"
#include "biasbench/annotation.hpp"
#include "biasbench/curation.hpp"
#include "biasbench/directions.hpp"
#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"
#include "biasbench/world.hpp"

namespace biasbench {

// ---------------------------------------------------------------------------
// Configuration. Every key is optional and defaults as below; unknown keys
// are schema errors.

struct SampleConfig {
  int training_count = 5000;
  int candidate_seeds = 100;
};

struct CurateConfig {
  std::size_t screen_keep = 60;
  std::size_t final_seeds = 20;
  std::optional<SeedId> initial_seed;
};

struct PairsConfig {
  int n_other = 3;
  std::uint64_t rng_seed = 7;
  int cross_group_n_other = 1;
};

struct AnnotateConfig {
  std::string mode = "simulate";  // simulate | serve
  int workers = kAnnotationsPerItem;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;         // served under /static when non-empty
  std::vector<Attribute> single_attributes = {Attribute::Uncanniness, Attribute::Age, Attribute::Expression,
                                              Attribute::Gender, Attribute::SkinTone};
};

struct ModelConfig {
  EmbedderSpec embedder;
  // When set, faces are handed to an external tool through this directory
  // (latents.jsonl out, embeddings.jsonl back) instead of the stand-in.
  std::optional<std::filesystem::path> external_dir;
};

struct AnalyzeConfig {
  AnalyzerConfig analyzer;
  std::vector<double> null_fmr_points = {0.01, 0.1};
};

struct PipelineConfig {
  std::filesystem::path out = "out";
  int threads = 1;
  WorldSpec world;  // directions are generated from rng_seed by the world stage
  SampleConfig sample;
  SvmOptions svm;
  RegressorOptions regressor;
  PrototypeOptions prototypes;
  CurateConfig curate;
  TraversalSpec age = age_traversal();
  TraversalSpec expression = expression_traversal();
  PairsConfig pairs;
  AnnotateConfig annotate;
  HcicOptions aggregate;
  std::vector<ModelConfig> models = {ModelConfig{EmbedderSpec{"standin-a", 1, std::nullopt, true}, std::nullopt}};
  AnalyzeConfig analyze;

  void validate() const;
  // The fully realized spec of the stand-in world.
  WorldSpec world_spec() const;
};

PipelineConfig config_from_json(const Json& j);
Json config_to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Stages

enum class Stage { World, Sample, Directions, Prototypes, Curate, Variants, Pairs, Annotate, Aggregate, Embed, Analyze, Report };
inline constexpr int kStageCount = 12;

const std::vector<Stage>& all_stages();
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
// Comma-separated names or "all"; result in pipeline order.
std::vector<Stage> parse_stage_list(std::string_view list);

// Building blocks shared by the on-disk pipeline and in-memory runs.

struct SeedCandidate {
  SeedId seed_id = 0;
  LatentCode latent;
};

std::vector<SeedCandidate> sample_seed_candidates(const World& world, int count);
TrainingSet sample_training_set(const World& world, int count);

struct PrototypeBatch {
  std::vector<FaceRecord> prototypes;   // reachable seeds, (seed, group) order
  std::vector<SeedId> discarded;        // unreachable within the cap
};

PrototypeBatch build_prototypes(std::span<const SeedCandidate> candidates, const DirectionSet& directions,
                                const PrototypeOptions& options, int threads = 1);

struct CurationResult {
  std::vector<SeedScreening> screening;
  SeedPool pool;
};

CurationResult curate_seeds(const World& world, std::span<const FaceRecord> prototypes, const CurateConfig& config,
                            double uncanny_max);

struct SequenceInfo {
  SeedId seed = 0;
  DemographicGroup group;
  Attribute attribute = Attribute::Age;
  double distance = 0.0;
  bool degenerate = false;
  bool truncated = false;
};

struct VariantBatch {
  std::vector<FaceRecord> faces;
  std::vector<SequenceInfo> sequences;
};

VariantBatch build_variants(std::span<const FaceRecord> prototypes, std::span<const SeedId> seeds,
                            const DirectionSet& directions, const TraversalSpec& age, const TraversalSpec& expression,
                            int threads = 1);

struct PairSet {
  std::vector<PairRecord> benchmark;  // positives then negatives
  std::vector<PairRecord> cross_group;
};

PairSet build_pair_set(const Dataset& dataset, const PairsConfig& config);

struct ModelAnalysis {
  std::string model_id;
  std::vector<ScoredPair> scored;  // benchmark (after filtering) plus cross-group pairs, unlabeled
  std::vector<BiasCurve> curves;   // every t_hcic in the configured set
  std::vector<BoxStat> boxstats;
  std::optional<GapTest> null_test;   // at the primary t_hcic
  std::optional<GapTest> gap_ci;
  std::optional<DominanceResult> dominance;  // when this model carries a bias
  std::vector<std::string> notes;
};

ModelAnalysis analyze_model(const std::string& model_id, std::span<const PairRecord> kept_pairs,
                            std::span<const PairRecord> cross_pairs, const EmbeddingIndex& embeddings,
                            const std::map<std::string, HcicRecord>& hcic, const AnalyzeConfig& config,
                            std::optional<DemographicGroup> bias_target, bool run_tests = true);

std::vector<EmbeddingVector> embed_faces(const World& world, const EmbedderSpec& spec,
                                         std::span<const FaceRecord> faces, int threads = 1);

// Normalized uncanniness per face from aggregated single-image scores.
std::map<std::string, double> uncanniness_map(std::span<const SingleScore> scores);

// Everything a simulated run produces, held in memory.
struct MemoryRun {
  std::unique_ptr<World> world;
  DirectionSet directions;
  PrototypeBatch prototypes;
  CurationResult curation;
  VariantBatch variants;
  Dataset dataset;
  PairSet pairs;
  std::vector<AnnotationRecord> annotations;
  AggregateResult aggregate;
  UncannyFilterResult filter;
  std::map<std::string, ModelAnalysis> analysis;
};

struct MemoryRunOptions {
  bool run_tests = true;       // null test, bootstrap CI
  bool single_images = true;   // simulate single-image annotations (uncanny filter needs them)
};

MemoryRun run_in_memory(const PipelineConfig& config, const MemoryRunOptions& options = {});

// ---------------------------------------------------------------------------
// On-disk pipeline with content-hash stage caching under <out>/.cache.

struct StageOutcome {
  Stage stage = Stage::World;
  bool cached = false;
  std::vector<std::filesystem::path> outputs;  // relative to the output root
};

// Blocks while the hub serves annotators; invoked by the annotate stage in
// serve mode.
using ServeHook = std::function<void(AnnotationHub& hub, const PipelineConfig& config)>;

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, std::ostream* log = nullptr);

  const PipelineConfig& config() const { return config_; }
  void set_serve_hook(ServeHook hook) { serve_ = std::move(hook); }

  // Runs the stages in pipeline order. On failure writes <out>/error.json
  // and rethrows.
  std::vector<StageOutcome> run(const std::vector<Stage>& stages);

 private:
  StageOutcome run_stage(Stage s);
  std::vector<std::filesystem::path> execute(Stage s);
  std::vector<std::string> inputs_of(Stage s) const;
  Json params_of(Stage s) const;
  std::filesystem::path path(const std::string& rel) const { return config_.out / rel; }
  const World& world();

  PipelineConfig config_;
  std::ostream* log_;
  ServeHook serve_;
  std::unique_ptr<World> world_;
};

// Machine-readable failure report.
Json error_report(Stage stage, const Error& e);
Json error_report(Stage stage, const std::exception& e);

}  // namespace biasbench
