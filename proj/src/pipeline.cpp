#include "biasbench/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "biasbench/pairs.hpp"
#include "biasbench/parallel.hpp"
#include "biasbench/report.hpp"

namespace biasbench {

namespace {

constexpr std::uint64_t kTrainingStream = 1;
constexpr std::uint64_t kSeedStream = 2;

// ---------------------------------------------------------------------------
// Strict JSON reading

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::Schema, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(Errc::Schema, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void opt(const Json& j, const char* key, T& dst, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    dst = it->get<T>();
  } catch (const Json::exception& e) {
    throw Error(Errc::Schema, where + "." + key + ": " + e.what());
  }
}

const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  auto it = j.find(key);
  return it == j.end() ? empty : *it;
}

std::optional<BiasInjection> read_bias(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  check_keys(*it, {"group", "severity"}, where + "." + key);
  try {
    return it->get<BiasInjection>();
  } catch (const Json::exception& e) {
    throw Error(Errc::Schema, where + "." + key + ": " + e.what());
  }
}

TraversalSpec read_traversal(const Json& j, TraversalSpec t, const std::string& where) {
  check_keys(j, {"target", "steps", "max_distance", "search_step", "tolerance"}, where);
  opt(j, "target", t.target, where);
  opt(j, "steps", t.steps, where);
  opt(j, "max_distance", t.max_distance, where);
  opt(j, "search_step", t.search_step, where);
  opt(j, "tolerance", t.tolerance, where);
  return t;
}

Json traversal_json(const TraversalSpec& t) {
  return Json{{"target", t.target},
              {"steps", t.steps},
              {"max_distance", t.max_distance},
              {"search_step", t.search_step},
              {"tolerance", t.tolerance}};
}

Json bias_json(const std::optional<BiasInjection>& b) { return b ? Json(*b) : Json(nullptr); }

std::optional<DemographicGroup> effective_bias(const EmbedderSpec& spec, const WorldSpec& world) {
  std::optional<BiasInjection> b = spec.bias_injection;
  if (!b && spec.inherit_world_bias) b = world.bias_injection;
  if (b && b->severity > 0.0) return b->group;
  return std::nullopt;
}

std::string hash_hex(std::string_view bytes) { return hex64(fnv1a(bytes)); }

std::string file_hash(const std::filesystem::path& p) { return hash_hex(read_text(p)); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  if (threads < 1) throw Error(Errc::Schema, "threads must be >= 1");
  world_spec().validate();
  if (sample.training_count < 2 || sample.candidate_seeds < 1)
    throw Error(Errc::Schema, "sample counts must be positive");
  if (curate.final_seeds > curate.screen_keep)
    throw Error(Errc::Schema, "curate.final_seeds exceeds curate.screen_keep");
  if (curate.screen_keep > static_cast<std::size_t>(sample.candidate_seeds))
    throw Error(Errc::Schema, "curate.screen_keep exceeds sample.candidate_seeds");
  age.validate();
  expression.validate();
  if (age.steps != 2 || expression.steps != 2)
    throw Error(Errc::Schema, "sequences have five slots, so traversal steps must be 2");
  if (pairs.n_other < 0 || pairs.cross_group_n_other < 0) throw Error(Errc::Schema, "pair counts must be >= 0");
  if (annotate.mode != "simulate" && annotate.mode != "serve")
    throw Error(Errc::Schema, "annotate.mode must be 'simulate' or 'serve'");
  if (annotate.workers < 1) throw Error(Errc::Schema, "annotate.workers must be >= 1");
  if (annotate.port < 0 || annotate.port > 65535) throw Error(Errc::Schema, "annotate.port out of range");
  if (models.empty()) throw Error(Errc::Schema, "embed.models is empty");
  std::set<std::string> ids;
  for (const ModelConfig& m : models) {
    if (m.embedder.model_id.empty() ||
        m.embedder.model_id.find_first_of("/\\ ,") != std::string::npos)
      throw Error(Errc::Schema, "model_id must be a non-empty token without separators");
    if (!ids.insert(m.embedder.model_id).second)
      throw Error(Errc::Schema, "duplicate model_id " + m.embedder.model_id);
  }
  analyze.analyzer.validate();
  for (double f : analyze.null_fmr_points)
    if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::Schema, "null_fmr_points must lie in [0, 1]");
}

WorldSpec PipelineConfig::world_spec() const {
  WorldSpec w = WorldSpec::generate(world.rng_seed, world.latent_dim);
  w.embed_dim = world.embed_dim;
  w.mesh_dim = world.mesh_dim;
  w.bias_injection = world.bias_injection;
  w.annotator_noise = world.annotator_noise;
  w.annotator_bias_sd = world.annotator_bias_sd;
  w.identity_drift = world.identity_drift;
  w.demographic_gain = world.demographic_gain;
  w.attribute_gain = world.attribute_gain;
  w.pose_gain = world.pose_gain;
  w.light_gain = world.light_gain;
  w.distance_scale = world.distance_scale;
  return w;
}

PipelineConfig config_from_json(const Json& j) {
  PipelineConfig c;
  check_keys(j, {"out", "threads", "world", "sample", "directions", "prototypes", "curate", "variants", "pairs",
                 "annotate", "aggregate", "embed", "analyze"},
             "config");
  std::string out = c.out.string();
  opt(j, "out", out, "config");
  c.out = out;
  opt(j, "threads", c.threads, "config");

  {
    const Json& w = section(j, "world");
    const std::string at = "world";
    check_keys(w, {"rng_seed", "latent_dim", "embed_dim", "mesh_dim", "annotator_noise", "annotator_bias_sd",
                   "identity_drift", "demographic_gain", "attribute_gain", "pose_gain", "light_gain",
                   "distance_scale", "bias_injection"},
               at);
    opt(w, "rng_seed", c.world.rng_seed, at);
    opt(w, "latent_dim", c.world.latent_dim, at);
    opt(w, "embed_dim", c.world.embed_dim, at);
    opt(w, "mesh_dim", c.world.mesh_dim, at);
    opt(w, "annotator_noise", c.world.annotator_noise, at);
    opt(w, "annotator_bias_sd", c.world.annotator_bias_sd, at);
    opt(w, "identity_drift", c.world.identity_drift, at);
    opt(w, "demographic_gain", c.world.demographic_gain, at);
    opt(w, "attribute_gain", c.world.attribute_gain, at);
    opt(w, "pose_gain", c.world.pose_gain, at);
    opt(w, "light_gain", c.world.light_gain, at);
    opt(w, "distance_scale", c.world.distance_scale, at);
    c.world.bias_injection = read_bias(w, "bias_injection", at);
  }
  {
    const Json& s = section(j, "sample");
    check_keys(s, {"training_count", "candidate_seeds"}, "sample");
    opt(s, "training_count", c.sample.training_count, "sample");
    opt(s, "candidate_seeds", c.sample.candidate_seeds, "sample");
  }
  {
    const Json& d = section(j, "directions");
    check_keys(d, {"svm_regularization", "svm_tolerance", "svm_max_epochs", "svm_shuffle_seed", "ridge"},
               "directions");
    opt(d, "svm_regularization", c.svm.regularization, "directions");
    opt(d, "svm_tolerance", c.svm.tolerance, "directions");
    opt(d, "svm_max_epochs", c.svm.max_epochs, "directions");
    opt(d, "svm_shuffle_seed", c.svm.shuffle_seed, "directions");
    opt(d, "ridge", c.regressor.ridge, "directions");
  }
  {
    const Json& p = section(j, "prototypes");
    check_keys(p, {"margin_target", "max_distance", "gender_first"}, "prototypes");
    opt(p, "margin_target", c.prototypes.margin_target, "prototypes");
    opt(p, "max_distance", c.prototypes.max_distance, "prototypes");
    opt(p, "gender_first", c.prototypes.gender_first, "prototypes");
  }
  {
    const Json& s = section(j, "curate");
    check_keys(s, {"screen_keep", "final_seeds", "initial_seed"}, "curate");
    opt(s, "screen_keep", c.curate.screen_keep, "curate");
    opt(s, "final_seeds", c.curate.final_seeds, "curate");
    if (auto it = s.find("initial_seed"); it != s.end() && !it->is_null()) {
      SeedId seed = 0;
      opt(s, "initial_seed", seed, "curate");
      c.curate.initial_seed = seed;
    }
  }
  {
    const Json& v = section(j, "variants");
    check_keys(v, {"age", "expression"}, "variants");
    c.age = read_traversal(section(v, "age"), c.age, "variants.age");
    c.expression = read_traversal(section(v, "expression"), c.expression, "variants.expression");
  }
  {
    const Json& p = section(j, "pairs");
    check_keys(p, {"n_other", "rng_seed", "cross_group_n_other"}, "pairs");
    opt(p, "n_other", c.pairs.n_other, "pairs");
    opt(p, "rng_seed", c.pairs.rng_seed, "pairs");
    opt(p, "cross_group_n_other", c.pairs.cross_group_n_other, "pairs");
  }
  {
    const Json& a = section(j, "annotate");
    check_keys(a, {"mode", "workers", "host", "port", "static_dir", "single_attributes"}, "annotate");
    opt(a, "mode", c.annotate.mode, "annotate");
    opt(a, "workers", c.annotate.workers, "annotate");
    opt(a, "host", c.annotate.host, "annotate");
    opt(a, "port", c.annotate.port, "annotate");
    opt(a, "static_dir", c.annotate.static_dir, "annotate");
    if (auto it = a.find("single_attributes"); it != a.end()) {
      std::vector<std::string> names;
      opt(a, "single_attributes", names, "annotate");
      c.annotate.single_attributes.clear();
      for (const std::string& n : names) c.annotate.single_attributes.push_back(parse_attribute(n));
    }
  }
  {
    const Json& a = section(j, "aggregate");
    check_keys(a, {"required", "allow_fallback", "min_scores"}, "aggregate");
    opt(a, "required", c.aggregate.required, "aggregate");
    opt(a, "allow_fallback", c.aggregate.allow_fallback, "aggregate");
    opt(a, "min_scores", c.aggregate.min_scores, "aggregate");
  }
  {
    const Json& e = section(j, "embed");
    check_keys(e, {"models"}, "embed");
    if (auto it = e.find("models"); it != e.end()) {
      if (!it->is_array()) throw Error(Errc::Schema, "embed.models: expected an array");
      c.models.clear();
      for (const Json& m : *it) {
        const std::string at = "embed.models[" + std::to_string(c.models.size()) + "]";
        check_keys(m, {"model_id", "seed", "bias_injection", "inherit_world_bias", "external_dir"}, at);
        ModelConfig mc;
        opt(m, "model_id", mc.embedder.model_id, at);
        opt(m, "seed", mc.embedder.seed, at);
        opt(m, "inherit_world_bias", mc.embedder.inherit_world_bias, at);
        mc.embedder.bias_injection = read_bias(m, "bias_injection", at);
        if (auto d = m.find("external_dir"); d != m.end() && !d->is_null()) {
          std::string dir;
          opt(m, "external_dir", dir, at);
          mc.external_dir = dir;
        }
        c.models.push_back(std::move(mc));
      }
    }
  }
  {
    const Json& a = section(j, "analyze");
    check_keys(a, {"t_hcic", "t_hcic_set", "uncanny_max", "fixed_threshold", "threshold_grid", "fmr_grid",
                   "bootstrap_resamples", "bootstrap_seed", "exclude_self_slots", "null_fmr_points"},
               "analyze");
    AnalyzerConfig& ac = c.analyze.analyzer;
    opt(a, "t_hcic", ac.t_hcic, "analyze");
    opt(a, "t_hcic_set", ac.t_hcic_set, "analyze");
    opt(a, "uncanny_max", ac.uncanny_max, "analyze");
    opt(a, "fixed_threshold", ac.fixed_threshold, "analyze");
    opt(a, "fmr_grid", ac.fmr_grid, "analyze");
    opt(a, "bootstrap_resamples", ac.bootstrap_resamples, "analyze");
    opt(a, "bootstrap_seed", ac.bootstrap_seed, "analyze");
    opt(a, "exclude_self_slots", ac.exclude_self_slots, "analyze");
    opt(a, "null_fmr_points", c.analyze.null_fmr_points, "analyze");
    const Json& g = section(a, "threshold_grid");
    check_keys(g, {"lo", "hi", "points"}, "analyze.threshold_grid");
    opt(g, "lo", ac.threshold_sweep.lo, "analyze.threshold_grid");
    opt(g, "hi", ac.threshold_sweep.hi, "analyze.threshold_grid");
    opt(g, "points", ac.threshold_sweep.points, "analyze.threshold_grid");
  }
  c.validate();
  return c;
}

Json config_to_json(const PipelineConfig& c) {
  Json models = Json::array();
  for (const ModelConfig& m : c.models) {
    models.push_back(Json{{"model_id", m.embedder.model_id},
                          {"seed", m.embedder.seed},
                          {"bias_injection", bias_json(m.embedder.bias_injection)},
                          {"inherit_world_bias", m.embedder.inherit_world_bias},
                          {"external_dir", m.external_dir ? Json(m.external_dir->string()) : Json(nullptr)}});
  }
  std::vector<std::string> singles;
  for (Attribute a : c.annotate.single_attributes) singles.emplace_back(to_string(a));
  const AnalyzerConfig& ac = c.analyze.analyzer;
  return Json{
      {"out", c.out.string()},
      {"threads", c.threads},
      {"world",
       {{"rng_seed", c.world.rng_seed},
        {"latent_dim", c.world.latent_dim},
        {"embed_dim", c.world.embed_dim},
        {"mesh_dim", c.world.mesh_dim},
        {"annotator_noise", c.world.annotator_noise},
        {"annotator_bias_sd", c.world.annotator_bias_sd},
        {"identity_drift", c.world.identity_drift},
        {"demographic_gain", c.world.demographic_gain},
        {"attribute_gain", c.world.attribute_gain},
        {"pose_gain", c.world.pose_gain},
        {"light_gain", c.world.light_gain},
        {"distance_scale", c.world.distance_scale},
        {"bias_injection", bias_json(c.world.bias_injection)}}},
      {"sample", {{"training_count", c.sample.training_count}, {"candidate_seeds", c.sample.candidate_seeds}}},
      {"directions",
       {{"svm_regularization", c.svm.regularization},
        {"svm_tolerance", c.svm.tolerance},
        {"svm_max_epochs", c.svm.max_epochs},
        {"svm_shuffle_seed", c.svm.shuffle_seed},
        {"ridge", c.regressor.ridge}}},
      {"prototypes",
       {{"margin_target", c.prototypes.margin_target},
        {"max_distance", c.prototypes.max_distance},
        {"gender_first", c.prototypes.gender_first}}},
      {"curate",
       {{"screen_keep", c.curate.screen_keep},
        {"final_seeds", c.curate.final_seeds},
        {"initial_seed", c.curate.initial_seed ? Json(*c.curate.initial_seed) : Json(nullptr)}}},
      {"variants", {{"age", traversal_json(c.age)}, {"expression", traversal_json(c.expression)}}},
      {"pairs",
       {{"n_other", c.pairs.n_other},
        {"rng_seed", c.pairs.rng_seed},
        {"cross_group_n_other", c.pairs.cross_group_n_other}}},
      {"annotate",
       {{"mode", c.annotate.mode},
        {"workers", c.annotate.workers},
        {"host", c.annotate.host},
        {"port", c.annotate.port},
        {"static_dir", c.annotate.static_dir},
        {"single_attributes", singles}}},
      {"aggregate",
       {{"required", c.aggregate.required},
        {"allow_fallback", c.aggregate.allow_fallback},
        {"min_scores", c.aggregate.min_scores}}},
      {"embed", {{"models", models}}},
      {"analyze",
       {{"t_hcic", ac.t_hcic},
        {"t_hcic_set", ac.t_hcic_set},
        {"uncanny_max", ac.uncanny_max},
        {"fixed_threshold", ac.fixed_threshold},
        {"threshold_grid",
         {{"lo", ac.threshold_sweep.lo}, {"hi", ac.threshold_sweep.hi}, {"points", ac.threshold_sweep.points}}},
        {"fmr_grid", ac.fmr_grid},
        {"bootstrap_resamples", ac.bootstrap_resamples},
        {"bootstrap_seed", ac.bootstrap_seed},
        {"exclude_self_slots", ac.exclude_self_slots},
        {"null_fmr_points", c.analyze.null_fmr_points}}}};
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::Parse, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stage names

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::World,    Stage::Sample,   Stage::Directions, Stage::Prototypes,
                                            Stage::Curate,   Stage::Variants, Stage::Pairs,      Stage::Annotate,
                                            Stage::Aggregate, Stage::Embed,   Stage::Analyze,    Stage::Report};
  return stages;
}

std::string_view to_string(Stage s) {
  static constexpr std::array<std::string_view, kStageCount> names = {
      "world", "sample", "directions", "prototypes", "curate",  "variants",
      "pairs", "annotate", "aggregate", "embed",     "analyze", "report"};
  return names[static_cast<std::size_t>(s)];
}

Stage parse_stage(std::string_view s) {
  for (Stage st : all_stages())
    if (to_string(st) == s) return st;
  throw Error(Errc::InvalidArgument, "unknown stage: " + std::string(s));
}

std::vector<Stage> parse_stage_list(std::string_view list) {
  if (list == "all" || list.empty()) return all_stages();
  std::set<int> chosen;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    const std::string_view name = list.substr(start, comma - start);
    if (!name.empty()) chosen.insert(static_cast<int>(parse_stage(name)));
    start = comma + 1;
  }
  std::vector<Stage> out;
  for (int s : chosen) out.push_back(static_cast<Stage>(s));
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

std::vector<SeedCandidate> sample_seed_candidates(const World& world, int count) {
  std::vector<LatentCode> latents = world.sample_latents(count, kSeedStream);
  std::vector<SeedCandidate> out;
  out.reserve(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) out.push_back({static_cast<SeedId>(i), std::move(latents[i])});
  return out;
}

TrainingSet sample_training_set(const World& world, int count) {
  return label_with_oracle(world, world.sample_latents(count, kTrainingStream));
}

PrototypeBatch build_prototypes(std::span<const SeedCandidate> candidates, const DirectionSet& directions,
                                const PrototypeOptions& options, int threads) {
  std::vector<std::optional<std::array<FaceRecord, kGroupCount>>> results(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    try {
      results[i] = make_prototypes(candidates[i].seed_id, candidates[i].latent, directions.gender, directions.race,
                                   options);
    } catch (const Error& e) {
      if (e.code() != Errc::Unreachable) throw;
    }
  });
  PrototypeBatch out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!results[i]) {
      out.discarded.push_back(candidates[i].seed_id);
      continue;
    }
    for (FaceRecord& f : *results[i]) out.prototypes.push_back(std::move(f));
  }
  return out;
}

CurationResult curate_seeds(const World& world, std::span<const FaceRecord> prototypes, const CurateConfig& config,
                            double uncanny_max) {
  std::map<SeedId, std::array<const FaceRecord*, kGroupCount>> by_seed;
  for (const FaceRecord& f : prototypes) {
    if (!f.variant.is_prototype()) throw Error(Errc::InvalidArgument, "curation expects prototype records only");
    by_seed[f.seed_id][static_cast<std::size_t>(f.group.index())] = &f;
  }
  CurationResult out;
  for (const auto& [seed, faces] : by_seed) {
    SeedScreening s;
    s.seed = seed;
    int agree = 0;
    for (int g = 0; g < kGroupCount; ++g) {
      const FaceRecord* f = faces[static_cast<std::size_t>(g)];
      if (!f) throw Error(Errc::NotFound, "seed " + std::to_string(seed) + " lacks a prototype");
      const AttributeScores a = world.true_attributes(f->latent);
      s.uncanniness[static_cast<std::size_t>(g)] = a.uncanniness;
      agree += a.group() == f->group ? 1 : 0;
    }
    s.agreement = static_cast<double>(agree) / kGroupCount;
    out.screening.push_back(s);
  }
  SeedPool screened = screen_seeds(out.screening, config.screen_keep, uncanny_max);
  MeshTable mesh;
  for (SeedId seed : screened.base) {
    auto& rows = mesh[seed];
    for (const FaceRecord* f : by_seed.at(seed)) rows.push_back(world.mesh_features(*f).values);
  }
  out.pool = maxmin_filter(screened, mesh, config.final_seeds, config.initial_seed);
  return out;
}

VariantBatch build_variants(std::span<const FaceRecord> prototypes, std::span<const SeedId> seeds,
                            const DirectionSet& directions, const TraversalSpec& age, const TraversalSpec& expression,
                            int threads) {
  const std::set<SeedId> chosen(seeds.begin(), seeds.end());
  std::vector<const FaceRecord*> protos;
  for (const FaceRecord& f : prototypes)
    if (f.variant.is_prototype() && chosen.count(f.seed_id)) protos.push_back(&f);

  struct PerPrototype {
    std::vector<FaceRecord> faces;
    std::vector<SequenceInfo> sequences;
  };
  std::vector<PerPrototype> results(protos.size());
  parallel_for(protos.size(), threads, [&](std::size_t i) {
    const FaceRecord& p = *protos[i];
    PerPrototype& r = results[i];
    r.faces.push_back(p);
    for (const FaceRecord& f : make_pose_sequence(p))
      if (!f.variant.is_prototype()) r.faces.push_back(f);
    for (const FaceRecord& f : make_lighting_sequence(p))
      if (!f.variant.is_prototype()) r.faces.push_back(f);
    for (const auto& [model, spec] : {std::pair{&directions.age, &age}, std::pair{&directions.expression, &expression}}) {
      SequenceResult seq = make_attribute_sequence(p, *model, *spec);
      for (FaceRecord& f : seq.faces)
        if (!f.variant.is_prototype()) r.faces.push_back(std::move(f));
      r.sequences.push_back({p.seed_id, p.group, model->attribute, seq.distance, seq.degenerate, seq.truncated});
    }
  });
  VariantBatch out;
  for (PerPrototype& r : results) {
    for (FaceRecord& f : r.faces) out.faces.push_back(std::move(f));
    for (SequenceInfo& s : r.sequences) out.sequences.push_back(s);
  }
  std::sort(out.faces.begin(), out.faces.end(),
            [](const FaceRecord& a, const FaceRecord& b) { return a.face_id < b.face_id; });
  return out;
}

PairSet build_pair_set(const Dataset& dataset, const PairsConfig& config) {
  PairSet out;
  out.benchmark = build_positive_pairs(dataset);
  std::vector<PairRecord> neg = build_negative_pairs(dataset, config.n_other, config.rng_seed);
  out.benchmark.insert(out.benchmark.end(), std::make_move_iterator(neg.begin()), std::make_move_iterator(neg.end()));
  if (config.cross_group_n_other > 0)
    out.cross_group = build_cross_group_pairs(dataset, config.cross_group_n_other, config.rng_seed);
  return out;
}

std::vector<EmbeddingVector> embed_faces(const World& world, const EmbedderSpec& spec,
                                         std::span<const FaceRecord> faces, int threads) {
  const StandInEmbedder embedder(world, spec);
  std::vector<EmbeddingVector> out(faces.size());
  parallel_for(faces.size(), threads, [&](std::size_t i) { out[i] = embedder.embed(faces[i]); });
  return out;
}

std::map<std::string, double> uncanniness_map(std::span<const SingleScore> scores) {
  std::map<std::string, double> out;
  for (const SingleScore& s : scores)
    if (s.attribute == Attribute::Uncanniness) out[s.face_id] = s.normalized;
  return out;
}

namespace {

std::vector<double> t_hcic_values(const AnalyzerConfig& c) {
  std::vector<double> ts = c.t_hcic_set;
  ts.push_back(c.t_hcic);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

}  // namespace

ModelAnalysis analyze_model(const std::string& model_id, std::span<const PairRecord> kept_pairs,
                            std::span<const PairRecord> cross_pairs, const EmbeddingIndex& embeddings,
                            const std::map<std::string, HcicRecord>& hcic, const AnalyzeConfig& config,
                            std::optional<DemographicGroup> bias_target, bool run_tests) {
  const AnalyzerConfig& ac = config.analyzer;
  ModelAnalysis m;
  m.model_id = model_id;
  std::vector<ScoredPair> bench = score_pairs(kept_pairs, embeddings);
  std::vector<ScoredPair> cross = score_pairs(cross_pairs, embeddings);

  std::vector<ScoredPair> primary;
  for (double t : t_hcic_values(ac)) {
    std::vector<ScoredPair> labeled = label_pairs(bench, hcic, t);
    StratifiedResult sr = stratified_curves(labeled, model_id, t, ac);
    for (BiasCurve& c : sr.curves) m.curves.push_back(std::move(c));
    for (std::string& n : sr.notes) m.notes.push_back(std::move(n));
    if (t == ac.t_hcic) primary = std::move(labeled);
  }
  if (run_tests && ac.bootstrap_resamples > 0) {
    m.null_test = null_gap_test(primary, config.null_fmr_points, ac);
    m.gap_ci = bootstrap_gap_ci(primary, config.null_fmr_points, ac);
  }
  if (bias_target) {
    std::vector<BiasCurve> at_primary;
    for (const BiasCurve& c : m.curves)
      if (c.t_hcic == ac.t_hcic) at_primary.push_back(c);
    m.dominance = check_dominance(at_primary, *bias_target, ac.fmr_grid);
  }
  m.scored = std::move(bench);
  m.scored.insert(m.scored.end(), cross.begin(), cross.end());
  m.boxstats = similarity_boxstats(m.scored);
  return m;
}

MemoryRun run_in_memory(const PipelineConfig& config, const MemoryRunOptions& options) {
  config.validate();
  MemoryRun r;
  r.world = std::make_unique<World>(config.world_spec());
  const World& world = *r.world;
  const int threads = config.threads;

  r.directions = fit_direction_set(sample_training_set(world, config.sample.training_count), config.svm,
                                   config.regressor);
  const auto candidates = sample_seed_candidates(world, config.sample.candidate_seeds);
  r.prototypes = build_prototypes(candidates, r.directions, config.prototypes, threads);
  r.curation = curate_seeds(world, r.prototypes.prototypes, config.curate, config.analyze.analyzer.uncanny_max);
  r.variants = build_variants(r.prototypes.prototypes, r.curation.pool.filtered, r.directions, config.age,
                              config.expression, threads);
  r.dataset = Dataset::build(r.variants.faces);
  r.pairs = build_pair_set(r.dataset, config.pairs);

  const auto workers = make_annotators(world, config.annotate.workers);
  r.annotations = simulate_pair_annotations(world, r.dataset, r.pairs.benchmark, workers, threads);
  if (options.single_images) {
    auto singles = simulate_single_annotations(world, r.dataset, config.annotate.single_attributes, workers, threads);
    r.annotations.insert(r.annotations.end(), singles.begin(), singles.end());
  }
  r.aggregate = aggregate_annotations(r.annotations, config.aggregate);
  if (options.single_images) {
    r.filter = uncanny_filter(r.pairs.benchmark, uncanniness_map(r.aggregate.single),
                              config.analyze.analyzer.uncanny_max);
  } else {
    r.filter.kept = r.pairs.benchmark;
    for (const PairRecord& p : r.filter.kept)
      (p.intended_kind == PairKind::Positive ? r.filter.kept_positive : r.filter.kept_negative)++;
  }
  std::map<std::string, HcicRecord> hcic;
  for (const HcicRecord& h : r.aggregate.hcic) hcic[h.pair_id] = h;

  for (const ModelConfig& mc : config.models) {
    if (mc.external_dir)
      throw Error(Errc::InvalidArgument, "in-memory runs support stand-in models only: " + mc.embedder.model_id);
    const EmbeddingIndex emb = index_embeddings(embed_faces(world, mc.embedder, r.dataset.records(), threads));
    r.analysis[mc.embedder.model_id] =
        analyze_model(mc.embedder.model_id, r.filter.kept, r.pairs.cross_group, emb, hcic, config.analyze,
                      effective_bias(mc.embedder, world.spec()), options.run_tests);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Artifact encodings local to the pipeline

namespace {

Json candidate_json(const SeedCandidate& c) { return Json{{"seed_id", c.seed_id}, {"latent", c.latent}}; }

SeedCandidate candidate_from(const Json& j) {
  return {j.at("seed_id").get<SeedId>(), j.at("latent").get<LatentCode>()};
}

Json sequence_json(const SequenceInfo& s) {
  return Json{{"seed_id", s.seed},          {"group", s.group},           {"attribute", to_string(s.attribute)},
              {"distance", s.distance},     {"degenerate", s.degenerate}, {"truncated", s.truncated}};
}

Json screening_json(const SeedScreening& s) {
  return Json{{"seed_id", s.seed}, {"uncanniness", s.uncanniness}, {"agreement", s.agreement}};
}

Json point_json(const CurvePoint& p) {
  return Json{{"threshold", p.threshold},         {"fnmr", p.fnmr},           {"fmr", p.fmr},
              {"false_rejects", p.false_rejects}, {"positives", p.positives}, {"false_accepts", p.false_accepts},
              {"negatives", p.negatives}};
}

CurvePoint point_from(const Json& j) {
  CurvePoint p;
  j.at("threshold").get_to(p.threshold);
  j.at("fnmr").get_to(p.fnmr);
  j.at("fmr").get_to(p.fmr);
  j.at("false_rejects").get_to(p.false_rejects);
  j.at("positives").get_to(p.positives);
  j.at("false_accepts").get_to(p.false_accepts);
  j.at("negatives").get_to(p.negatives);
  return p;
}

// Curve points are stored column-wise; the counts carry the exact values.
Json curve_json(const BiasCurve& c) {
  Json thresholds = Json::array(), fr = Json::array(), fa = Json::array();
  for (const CurvePoint& p : c.points) {
    thresholds.push_back(p.threshold);
    fr.push_back(p.false_rejects);
    fa.push_back(p.false_accepts);
  }
  const std::size_t pos = c.points.empty() ? 0 : c.points.front().positives;
  const std::size_t neg = c.points.empty() ? 0 : c.points.front().negatives;
  return Json{{"model_id", c.model_id},     {"attribute", to_string(c.attribute)},
              {"group", c.group.code()},    {"t_hcic", c.t_hcic},
              {"positives", pos},           {"negatives", neg},
              {"thresholds", thresholds},   {"false_rejects", fr},
              {"false_accepts", fa},        {"operating_point", point_json(c.operating)}};
}

BiasCurve curve_from(const Json& j) {
  BiasCurve c;
  j.at("model_id").get_to(c.model_id);
  c.attribute = parse_attribute(j.at("attribute").get<std::string>());
  c.group = group_from_code(j.at("group").get<std::string>());
  j.at("t_hcic").get_to(c.t_hcic);
  const auto pos = j.at("positives").get<std::size_t>();
  const auto neg = j.at("negatives").get<std::size_t>();
  const auto& th = j.at("thresholds");
  const auto& fr = j.at("false_rejects");
  const auto& fa = j.at("false_accepts");
  if (th.size() != fr.size() || th.size() != fa.size())
    throw Error(Errc::Parse, "curve columns differ in length");
  if (pos == 0 || neg == 0) throw Error(Errc::Parse, "curve without positives or negatives");
  for (std::size_t i = 0; i < th.size(); ++i) {
    CurvePoint p;
    p.threshold = th[i].get<double>();
    p.positives = pos;
    p.negatives = neg;
    p.false_rejects = fr[i].get<std::size_t>();
    p.false_accepts = fa[i].get<std::size_t>();
    p.fnmr = static_cast<double>(p.false_rejects) / static_cast<double>(pos);
    p.fmr = static_cast<double>(p.false_accepts) / static_cast<double>(neg);
    c.points.push_back(p);
  }
  c.operating = point_from(j.at("operating_point"));
  return c;
}

Json boxstat_json(const std::string& model, const BoxStat& b) {
  return Json{{"model_id", model},       {"grouping", to_string(b.grouping)}, {"attribute", to_string(b.attribute)},
              {"bucket", b.bucket},      {"count", b.count},                  {"median", b.median},
              {"p15", b.p15},            {"p85", b.p85}};
}

Grouping parse_grouping(std::string_view s) {
  for (Grouping g : {Grouping::SameSeedSameGroup, Grouping::DiffSeedSameGroup, Grouping::DiffGroup})
    if (to_string(g) == s) return g;
  throw Error(Errc::Parse, "unknown grouping: " + std::string(s));
}

BoxStat boxstat_from(const Json& j) {
  BoxStat b;
  b.grouping = parse_grouping(j.at("grouping").get<std::string>());
  b.attribute = parse_attribute(j.at("attribute").get<std::string>());
  j.at("bucket").get_to(b.bucket);
  j.at("count").get_to(b.count);
  j.at("median").get_to(b.median);
  j.at("p15").get_to(b.p15);
  j.at("p85").get_to(b.p85);
  return b;
}

Json gap_json(const GapTest& t) {
  return Json{{"observed", t.observed}, {"ci_low", t.ci_low},     {"ci_high", t.ci_high},
              {"within", t.within},     {"resamples", t.resamples}};
}

Json dominance_json(const DominanceResult& d) {
  Json per = Json::object();
  for (const auto& [a, ok] : d.per_attribute) per[std::string(to_string(a))] = ok;
  return Json{{"all", d.all}, {"per_attribute", per}};
}

std::string jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const Json& r : rows) {
    out += dump_line(r);
    out += '\n';
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// On-disk pipeline

Json error_report(Stage stage, const Error& e) {
  return Json{{"stage", to_string(stage)}, {"code", to_string(e.code())}, {"message", e.what()}};
}

Json error_report(Stage stage, const std::exception& e) {
  return Json{{"stage", to_string(stage)}, {"code", "internal"}, {"message", e.what()}};
}

Pipeline::Pipeline(PipelineConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {
  config_.validate();
}

const World& Pipeline::world() {
  if (!world_) {
    const Json j = Json::parse(read_text(path("world.json")));
    world_ = std::make_unique<World>(j.get<WorldSpec>());
  }
  return *world_;
}

std::vector<std::string> Pipeline::inputs_of(Stage s) const {
  switch (s) {
    case Stage::World: return {};
    case Stage::Sample: return {"world.json"};
    case Stage::Directions: return {"training.jsonl"};
    case Stage::Prototypes: return {"seed_candidates.jsonl", "directions.json"};
    case Stage::Curate: return {"world.json", "prototypes.jsonl"};
    case Stage::Variants: return {"prototypes.jsonl", "seeds_selected.json", "directions.json"};
    case Stage::Pairs: return {"faces.jsonl"};
    case Stage::Annotate: return {"world.json", "faces.jsonl", "pairs.jsonl"};
    case Stage::Aggregate: return {"annotations.jsonl", "pairs.jsonl"};
    case Stage::Embed: return {"world.json", "faces.jsonl"};
    case Stage::Analyze: {
      std::vector<std::string> in = {"pairs_kept.jsonl", "pairs_cross.jsonl", "hcic.jsonl"};
      for (const ModelConfig& m : config_.models) in.push_back("embeddings/" + m.embedder.model_id + ".jsonl");
      return in;
    }
    case Stage::Report:
      return {"analysis/curves.jsonl", "analysis/boxstats.jsonl", "analysis/tests.json", "aggregate_summary.json"};
  }
  return {};
}

Json Pipeline::params_of(Stage s) const {
  const Json c = config_to_json(config_);
  switch (s) {
    case Stage::World: return c.at("world");
    case Stage::Sample: return c.at("sample");
    case Stage::Directions: return c.at("directions");
    case Stage::Prototypes: return c.at("prototypes");
    case Stage::Curate: return Json{{"curate", c.at("curate")}, {"uncanny_max", c.at("analyze").at("uncanny_max")}};
    case Stage::Variants: return c.at("variants");
    case Stage::Pairs: return c.at("pairs");
    case Stage::Annotate: return Json{{"workers", config_.annotate.workers},
                                      {"single_attributes", c.at("annotate").at("single_attributes")}};
    case Stage::Aggregate: return Json{{"aggregate", c.at("aggregate")},
                                       {"uncanny_max", c.at("analyze").at("uncanny_max")}};
    case Stage::Embed: {
      Json j = c.at("embed");
      // External embeddings are inputs too.
      for (const ModelConfig& m : config_.models) {
        if (!m.external_dir) continue;
        const auto p = *m.external_dir / "embeddings.jsonl";
        j["external_hashes"][m.embedder.model_id] = std::filesystem::exists(p) ? file_hash(p) : "missing";
      }
      return j;
    }
    case Stage::Analyze: return Json{{"analyze", c.at("analyze")}, {"embed", c.at("embed")}};
    case Stage::Report: return c.at("analyze");
  }
  return Json::object();
}

std::vector<StageOutcome> Pipeline::run(const std::vector<Stage>& stages) {
  std::error_code ec;
  std::filesystem::create_directories(config_.out, ec);
  if (ec) throw Error(Errc::Io, "cannot create output root " + config_.out.string() + ": " + ec.message());
  std::filesystem::remove(path("error.json"), ec);

  std::vector<Stage> ordered = stages;
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  std::vector<StageOutcome> outcomes;
  for (Stage s : ordered) {
    try {
      outcomes.push_back(run_stage(s));
    } catch (const Error& e) {
      write_text_atomic(path("error.json"), error_report(s, e).dump(2) + "\n");
      throw;
    } catch (const std::exception& e) {
      write_text_atomic(path("error.json"), error_report(s, e).dump(2) + "\n");
      throw;
    }
  }
  return outcomes;
}

StageOutcome Pipeline::run_stage(Stage s) {
  const std::string name(to_string(s));
  Fnv1a key;
  key.update(name).separator().update(dump_line(params_of(s))).separator();
  for (const std::string& rel : inputs_of(s)) {
    const auto p = path(rel);
    if (!std::filesystem::exists(p))
      throw Error(Errc::MissingArtifact, "stage " + name + " needs " + p.string() + "; run the upstream stage first");
    key.update(rel).separator().update(fnv1a(read_text(p))).separator();
  }
  const std::string key_hex = hex64(key.digest());
  const auto stamp_path = path(".cache/" + name + ".json");
  const bool serve = s == Stage::Annotate && config_.annotate.mode == "serve";

  if (!serve && std::filesystem::exists(stamp_path)) {
    const Json stamp = Json::parse(read_text(stamp_path));
    bool fresh = stamp.value("key", "") == key_hex;
    std::vector<std::filesystem::path> outputs;
    if (fresh) {
      for (const auto& [rel, h] : stamp.at("outputs").items()) {
        outputs.emplace_back(rel);
        const auto p = path(rel);
        if (!std::filesystem::exists(p) || file_hash(p) != h.get<std::string>()) {
          fresh = false;
          break;
        }
      }
    }
    if (fresh) {
      if (log_) *log_ << "[" << name << "] up to date\n";
      return {s, true, outputs};
    }
  }

  const std::vector<std::filesystem::path> outputs = execute(s);
  if (!serve) {
    Json stamp{{"key", key_hex}, {"outputs", Json::object()}};
    for (const auto& rel : outputs) stamp["outputs"][rel.generic_string()] = file_hash(path(rel.string()));
    std::filesystem::create_directories(stamp_path.parent_path());
    write_text_atomic(stamp_path, stamp.dump(2) + "\n");
  }
  if (log_) *log_ << "[" << name << "] wrote " << outputs.size() << " artifact(s)\n";
  return {s, false, outputs};
}

std::vector<std::filesystem::path> Pipeline::execute(Stage s) {
  const PipelineConfig& c = config_;
  const int threads = c.threads;
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& rel, const std::string& content) {
    const auto p = path(rel);
    std::filesystem::create_directories(p.parent_path());
    write_text_atomic(p, content);
    written.emplace_back(rel);
  };
  auto load_faces = [&] { return Dataset::build(read_jsonl<FaceRecord>(path("faces.jsonl"))); };
  auto load_directions = [&] { return Json::parse(read_text(path("directions.json"))).get<DirectionSet>(); };

  switch (s) {
    case Stage::World: {
      world_.reset();
      put("world.json", Json(c.world_spec()).dump(2) + "\n");
      break;
    }
    case Stage::Sample: {
      const World& w = world();
      const TrainingSet train = sample_training_set(w, c.sample.training_count);
      put("training.jsonl", jsonl([&] {
            std::vector<Json> rows;
            for (const TrainingEntry& e : train.entries) rows.emplace_back(e);
            return rows;
          }()));
      std::vector<Json> rows;
      for (const SeedCandidate& sc : sample_seed_candidates(w, c.sample.candidate_seeds))
        rows.push_back(candidate_json(sc));
      put("seed_candidates.jsonl", jsonl(rows));
      break;
    }
    case Stage::Directions: {
      TrainingSet train;
      train.entries = read_jsonl<TrainingEntry>(path("training.jsonl"));
      put("directions.json", Json(fit_direction_set(train, c.svm, c.regressor)).dump(2) + "\n");
      break;
    }
    case Stage::Prototypes: {
      std::vector<SeedCandidate> candidates;
      for (const Json& j : read_jsonl_values(path("seed_candidates.jsonl"))) candidates.push_back(candidate_from(j));
      const PrototypeBatch batch = build_prototypes(candidates, load_directions(), c.prototypes, threads);
      write_jsonl(path("prototypes.jsonl"), batch.prototypes);
      written.emplace_back("prototypes.jsonl");
      put("prototypes_discarded.json", Json{{"discarded", batch.discarded}}.dump(2) + "\n");
      break;
    }
    case Stage::Curate: {
      const auto protos = read_jsonl<FaceRecord>(path("prototypes.jsonl"));
      const CurationResult cur = curate_seeds(world(), protos, c.curate, c.analyze.analyzer.uncanny_max);
      Json j = cur.pool;
      j["screening"] = Json::array();
      for (const SeedScreening& sc : cur.screening) j["screening"].push_back(screening_json(sc));
      put("seeds_selected.json", j.dump(2) + "\n");
      break;
    }
    case Stage::Variants: {
      const auto protos = read_jsonl<FaceRecord>(path("prototypes.jsonl"));
      const SeedPool pool = Json::parse(read_text(path("seeds_selected.json"))).get<SeedPool>();
      const VariantBatch batch = build_variants(protos, pool.filtered, load_directions(), c.age, c.expression, threads);
      Dataset::build(batch.faces);  // validate before writing
      write_jsonl(path("faces.jsonl"), batch.faces);
      written.emplace_back("faces.jsonl");
      std::vector<Json> rows;
      for (const SequenceInfo& si : batch.sequences) rows.push_back(sequence_json(si));
      put("sequences.jsonl", jsonl(rows));
      break;
    }
    case Stage::Pairs: {
      const Dataset ds = load_faces();
      const PairSet ps = build_pair_set(ds, c.pairs);
      write_jsonl(path("pairs.jsonl"), ps.benchmark);
      written.emplace_back("pairs.jsonl");
      write_jsonl(path("pairs_cross.jsonl"), ps.cross_group);
      written.emplace_back("pairs_cross.jsonl");
      put("pairs_summary.txt", summarize_pairs(ps.benchmark).to_text());
      if (log_) *log_ << summarize_pairs(ps.benchmark).to_text();
      break;
    }
    case Stage::Annotate: {
      const Dataset ds = load_faces();
      const auto pairs = read_jsonl<PairRecord>(path("pairs.jsonl"));
      if (c.annotate.mode == "serve") {
        if (!serve_) throw Error(Errc::InvalidArgument, "no HTTP server available for annotate serve");
        AnnotationHub hub(path("annotations.jsonl"));
        hub.load_items(pairs, ds.records(), c.annotate.single_attributes);
        serve_(hub, c);
        written.emplace_back("annotations.jsonl");
        break;
      }
      const World& w = world();
      const auto workers = make_annotators(w, c.annotate.workers);
      auto ann = simulate_pair_annotations(w, ds, pairs, workers, threads);
      auto singles = simulate_single_annotations(w, ds, c.annotate.single_attributes, workers, threads);
      ann.insert(ann.end(), singles.begin(), singles.end());
      write_jsonl(path("annotations.jsonl"), ann);
      written.emplace_back("annotations.jsonl");
      break;
    }
    case Stage::Aggregate: {
      const auto ann = read_jsonl<AnnotationRecord>(path("annotations.jsonl"));
      const auto pairs = read_jsonl<PairRecord>(path("pairs.jsonl"));
      const AggregateResult agg = aggregate_annotations(ann, c.aggregate);
      write_jsonl(path("hcic.jsonl"), agg.hcic);
      written.emplace_back("hcic.jsonl");
      write_jsonl(path("attributes.jsonl"), agg.single);
      written.emplace_back("attributes.jsonl");
      const UncannyFilterResult f = uncanny_filter(pairs, uncanniness_map(agg.single), c.analyze.analyzer.uncanny_max);
      write_jsonl(path("pairs_kept.jsonl"), f.kept);
      written.emplace_back("pairs_kept.jsonl");

      std::vector<double> pair_disp;
      for (const HcicRecord& h : agg.hcic) pair_disp.push_back(h.dispersion);
      std::map<std::string, std::vector<double>> single_disp;
      for (const SingleScore& sc : agg.single) single_disp[std::string(to_string(sc.attribute))].push_back(sc.dispersion);
      Json disp = Json::object();
      if (!pair_disp.empty()) disp["pair_identity"] = median(pair_disp);
      for (auto& [a, v] : single_disp) disp[a] = median(v);
      const Json summary{{"uncanny_filter",
                          {{"kept_positive", f.kept_positive},
                           {"kept_negative", f.kept_negative},
                           {"dropped_uncanny", f.dropped_uncanny},
                           {"dropped_missing", f.dropped_missing}}},
                         {"skipped_items", agg.skipped_items},
                         {"median_dispersion", disp}};
      put("aggregate_summary.json", summary.dump(2) + "\n");
      break;
    }
    case Stage::Embed: {
      const Dataset ds = load_faces();
      for (const ModelConfig& m : c.models) {
        const std::string rel = "embeddings/" + m.embedder.model_id + ".jsonl";
        std::vector<EmbeddingVector> emb;
        if (m.external_dir) {
          std::filesystem::create_directories(*m.external_dir);
          std::string latents;
          for (const FaceRecord& f : ds.records()) latents += dump_line(Json(f)) + "\n";
          const auto lp = *m.external_dir / "latents.jsonl";
          if (!std::filesystem::exists(lp) || read_text(lp) != latents) write_text_atomic(lp, latents);
          const auto ep = *m.external_dir / "embeddings.jsonl";
          if (!std::filesystem::exists(ep))
            throw Error(Errc::MissingArtifact, "external model " + m.embedder.model_id + ": wrote " + lp.string() +
                                                   "; waiting for " + ep.string());
          const EmbeddingIndex idx = index_embeddings(read_jsonl<EmbeddingVector>(ep));
          for (const FaceRecord& f : ds.records()) {
            auto it = idx.find(f.face_id);
            if (it == idx.end()) throw Error(Errc::NotFound, "external embeddings lack face " + f.face_id);
            EmbeddingVector e = it->second;
            e.model_id = m.embedder.model_id;
            emb.push_back(std::move(e));
          }
        } else {
          emb = embed_faces(world(), m.embedder, ds.records(), threads);
        }
        const auto p = path(rel);
        std::filesystem::create_directories(p.parent_path());
        write_jsonl(p, emb);
        written.emplace_back(rel);
      }
      break;
    }
    case Stage::Analyze: {
      const auto kept = read_jsonl<PairRecord>(path("pairs_kept.jsonl"));
      const auto cross = read_jsonl<PairRecord>(path("pairs_cross.jsonl"));
      std::map<std::string, HcicRecord> hcic;
      for (HcicRecord& h : read_jsonl<HcicRecord>(path("hcic.jsonl"))) hcic[h.pair_id] = h;
      const WorldSpec ws = Json::parse(read_text(path("world.json"))).get<WorldSpec>();
      std::vector<Json> curves, boxes;
      Json tests = Json::object();
      for (const ModelConfig& m : c.models) {
        const EmbeddingIndex emb =
            index_embeddings(read_jsonl<EmbeddingVector>(path("embeddings/" + m.embedder.model_id + ".jsonl")));
        const ModelAnalysis a =
            analyze_model(m.embedder.model_id, kept, cross, emb, hcic, c.analyze, effective_bias(m.embedder, ws));
        for (const BiasCurve& cv : a.curves) curves.push_back(curve_json(cv));
        for (const BoxStat& b : a.boxstats) boxes.push_back(boxstat_json(a.model_id, b));
        Json t{{"notes", a.notes}};
        if (a.null_test) t["null_gap_test"] = gap_json(*a.null_test);
        if (a.gap_ci) t["gap_bootstrap_ci"] = gap_json(*a.gap_ci);
        if (a.dominance) t["dominance"] = dominance_json(*a.dominance);
        for (Grouping g : {Grouping::SameSeedSameGroup, Grouping::DiffSeedSameGroup, Grouping::DiffGroup})
          if (auto med = grouping_median(a.scored, g)) t["grouping_median"][std::string(to_string(g))] = *med;
        tests[a.model_id] = std::move(t);
      }
      put("analysis/curves.jsonl", jsonl(curves));
      put("analysis/boxstats.jsonl", jsonl(boxes));
      put("analysis/tests.json", tests.dump(2) + "\n");
      break;
    }
    case Stage::Report: {
      ReportInput in;
      for (const Json& j : read_jsonl_values(path("analysis/curves.jsonl"))) in.curves.push_back(curve_from(j));
      for (const Json& j : read_jsonl_values(path("analysis/boxstats.jsonl")))
        in.boxstats[j.at("model_id").get<std::string>()].push_back(boxstat_from(j));
      in.plot_t_hcic = c.analyze.analyzer.t_hcic;
      in.fmr_grid = c.analyze.analyzer.fmr_grid;
      in.extra["tests"] = Json::parse(read_text(path("analysis/tests.json")));
      in.extra["aggregate"] = Json::parse(read_text(path("aggregate_summary.json")));
      for (const auto& p : emit_report(path("report"), in))
        written.push_back(std::filesystem::relative(p, c.out));
      break;
    }
  }
  return written;
}

}  // namespace biasbench
