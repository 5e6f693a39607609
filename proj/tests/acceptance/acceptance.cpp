// Acceptance gate: one PASS/FAIL line per criterion. Tolerances and
// replication counts are fixed here and are not configurable.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "biasbench/analysis.hpp"
#include "biasbench/annotation.hpp"
#include "biasbench/curation.hpp"
#include "biasbench/directions.hpp"
#include "biasbench/pairs.hpp"
#include "biasbench/pipeline.hpp"

using namespace biasbench;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kTopologySeconds = 60.0;
constexpr int kHcicVectors = 10000;
constexpr int kMaxminPools = 200;
constexpr int kMaxminPoolMax = 20;
constexpr int kCurveSets = 100;
constexpr int kCurveSetMax = 100;
constexpr int kDirectionSamples = 10000;
constexpr double kDirectionCosine = 0.95;
constexpr double kDirectionSeconds = 120.0;
constexpr int kTraversalModels = 1000;
constexpr double kTraversalTolerance = 1e-6;
constexpr int kNullReplications = 20;
constexpr int kNullRequired = 18;
constexpr double kBiasSeverity = 2.5;  // calibrated detection floor
constexpr int kBiasReplications = 100;
constexpr int kBiasRequired = 95;
constexpr double kDispersionLo = 0.25;
constexpr double kDispersionHi = 0.35;
constexpr int kOrderingReplications = 20;

// Replication world seeds are disjoint from the ones used to calibrate the
// defaults (1000..1039).
constexpr std::uint64_t kNullSeedBase = 5000;
constexpr std::uint64_t kBiasSeedBase = 6000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, " [%.1fs]", s);
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << buf << std::endl;
  if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> count_pairs_for(int seeds, int threads) {
  PipelineConfig c;
  c.threads = threads;
  const World world(c.world_spec());
  const DirectionSet dirs = fit_direction_set(sample_training_set(world, c.sample.training_count), c.svm, c.regressor);
  // Over-sample candidates; a few seeds can be unreachable within the cap.
  const auto candidates = sample_seed_candidates(world, seeds + seeds / 2 + 10);
  const PrototypeBatch batch = build_prototypes(candidates, dirs, c.prototypes, threads);
  std::vector<SeedId> chosen;
  for (const FaceRecord& p : batch.prototypes)
    if (chosen.empty() || chosen.back() != p.seed_id) chosen.push_back(p.seed_id);
  if (chosen.size() < static_cast<std::size_t>(seeds)) throw Error(Errc::Degenerate, "not enough reachable seeds");
  chosen.resize(static_cast<std::size_t>(seeds));
  const VariantBatch v = build_variants(batch.prototypes, chosen, dirs, c.age, c.expression, threads);
  const Dataset ds = Dataset::build(v.faces);
  if (ds.prototype_count() != static_cast<std::size_t>(seeds) * kGroupCount)
    throw Error(Errc::Inconsistent, "prototype count off");
  return {build_positive_pairs(ds).size(), build_negative_pairs(ds, 3, c.pairs.rng_seed).size()};
}

Outcome pair_topology(int threads) {
  const auto t0 = Clock::now();
  const auto [p100, n100] = count_pairs_for(100, threads);
  const auto [p20, n20] = count_pairs_for(20, threads);
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = p100 == 12000 && n100 == 36000 && p20 == 2400 && n20 == 7200 && s < kTopologySeconds;
  return {ok, fmt("100 seeds %zu/%zu, 20 seeds %zu/%zu (want 12000/36000, 2400/7200), %.1fs < %.0fs", p100, n100,
                  p20, n20, s, kTopologySeconds)};
}

// ---------------------------------------------------------------------------

Outcome hcic_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> d(0, 4);
  int mismatches = 0;
  for (int i = 0; i < kHcicVectors; ++i) {
    std::vector<int> s(9);
    for (int& v : s) v = d(rng);
    std::vector<int> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (int k = 2; k < 7; ++k) sum += sorted[static_cast<std::size_t>(k)];
    const double expected = sum / 5.0 / 4.0;
    if (compute_hcic("p", s).hcic != expected) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/%d vectors differ from the brute-force trimmed mean (exact)", mismatches,
                               kHcicVectors)};
}

// ---------------------------------------------------------------------------

std::vector<SeedId> brute_maxmin(const std::vector<SeedId>& base, const MeshTable& mesh, std::size_t n) {
  auto dist = [&](SeedId a, SeedId b) {
    double best = std::numeric_limits<double>::infinity();
    const auto& ma = mesh.at(a);
    const auto& mb = mesh.at(b);
    for (std::size_t g = 0; g < ma.size(); ++g) {
      double s = 0.0;
      for (std::size_t k = 0; k < ma[g].size(); ++k) s += (ma[g][k] - mb[g][k]) * (ma[g][k] - mb[g][k]);
      best = std::min(best, std::sqrt(s));
    }
    return best;
  };
  std::vector<SeedId> chosen = {base.front()};
  while (chosen.size() < n) {
    SeedId best = 0;
    double best_d = -1.0;
    for (SeedId s : base) {
      if (std::find(chosen.begin(), chosen.end(), s) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (SeedId f : chosen) d = std::min(d, dist(s, f));
      if (d > best_d || (d == best_d && s < best)) {
        best = s;
        best_d = d;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

Outcome maxmin_oracle() {
  std::mt19937_64 rng(202);
  int mismatches = 0;
  int with_ties = 0;
  for (int trial = 0; trial < kMaxminPools; ++trial) {
    const int size = 2 + static_cast<int>(rng() % (kMaxminPoolMax - 1));
    const int groups = 1 + static_cast<int>(rng() % 6);
    const int dim = 1 + static_cast<int>(rng() % 3);
    // Small integer grids force exact distance ties, exercising the tie-break.
    std::uniform_int_distribution<int> coord(0, trial % 2 ? 3 : 50);
    std::set<SeedId> ids;
    while (ids.size() < static_cast<std::size_t>(size)) ids.insert(rng() % 1000);
    std::vector<SeedId> base(ids.begin(), ids.end());
    std::shuffle(base.begin(), base.end(), rng);
    MeshTable mesh;
    for (SeedId s : base) {
      auto& rows = mesh[s];
      rows.resize(static_cast<std::size_t>(groups));
      for (auto& r : rows)
        for (int k = 0; k < dim; ++k) r.push_back(coord(rng));
    }
    const std::size_t n = 1 + rng() % base.size();
    SeedPool pool;
    pool.base = base;
    const SeedPool got = maxmin_filter(pool, mesh, n);
    if (got.filtered != brute_maxmin(base, mesh, n)) ++mismatches;
    std::set<std::optional<double>> distinct(got.selection_distances.begin() + 1, got.selection_distances.end());
    if (distinct.size() + 1 < got.selection_distances.size()) ++with_ties;
  }
  return {mismatches == 0, fmt("%d/%d pools differ from the per-step argmax oracle (%d pools had tied distances)",
                               mismatches, kMaxminPools, with_ties)};
}

// ---------------------------------------------------------------------------

Outcome curve_oracle() {
  std::mt19937_64 rng(303);
  const std::vector<double> grid = ThresholdGrid{}.values();
  int mismatches = 0;
  int monotone_breaks = 0;
  int endpoint_breaks = 0;
  for (int trial = 0; trial < kCurveSets; ++trial) {
    const int n = 2 + static_cast<int>(rng() % (kCurveSetMax - 1));
    // Cosines on a coarse lattice so many fall exactly on grid thresholds.
    std::uniform_int_distribution<int> lattice(-64, 64);
    std::vector<ScoredPair> s(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto& p = s[static_cast<std::size_t>(i)];
      p.pair_id = "p" + std::to_string(i);
      p.cosine = lattice(rng) / 64.0;
      p.label = i == 0 ? PairKind::Positive : i == 1 ? PairKind::Negative
                                                      : (rng() % 2 ? PairKind::Positive : PairKind::Negative);
    }
    const auto curve = fnmr_fmr(s, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      std::size_t pos = 0, neg = 0, fr = 0, fa = 0;
      for (const ScoredPair& p : s) {
        const bool accept = p.cosine >= grid[k];
        if (*p.label == PairKind::Positive) {
          ++pos;
          fr += accept ? 0 : 1;
        } else {
          ++neg;
          fa += accept ? 1 : 0;
        }
      }
      const CurvePoint& c = curve[k];
      if (c.false_rejects != fr || c.false_accepts != fa || c.positives != pos || c.negatives != neg ||
          c.fnmr != static_cast<double>(fr) / static_cast<double>(pos) ||
          c.fmr != static_cast<double>(fa) / static_cast<double>(neg) || c.threshold != grid[k])
        ++mismatches;
      if (k > 0 && (c.fnmr < curve[k - 1].fnmr || c.fmr > curve[k - 1].fmr)) ++monotone_breaks;
    }
    const CurvePoint lo = operating_point(s, -1.0);
    const CurvePoint hi = operating_point(s, std::nextafter(1.0, 2.0));
    if (lo.fnmr != 0.0 || lo.fmr != 1.0 || hi.fnmr != 1.0 || hi.fmr != 0.0) ++endpoint_breaks;
  }
  const bool ok = mismatches == 0 && monotone_breaks == 0 && endpoint_breaks == 0;
  return {ok, fmt("%d point mismatches vs exhaustive recount, %d monotonicity breaks, %d endpoint breaks over %d sets",
                  mismatches, monotone_breaks, endpoint_breaks, kCurveSets)};
}

// ---------------------------------------------------------------------------

double abs_cos(const std::vector<double>& w, const Eigen::VectorXd& u) {
  const Eigen::Map<const Eigen::VectorXd> v(w.data(), static_cast<Eigen::Index>(w.size()));
  return std::abs(v.dot(u)) / (v.norm() * u.norm());
}

Outcome direction_recovery() {
  const auto t0 = Clock::now();
  const World world(WorldSpec::generate(404));
  const TrainingSet train = label_with_oracle(world, world.sample_latents(kDirectionSamples, 1));
  const DirectionSet s = fit_direction_set(train);
  const double s_elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  std::map<std::string, double> cos;
  cos["gender"] = abs_cos(s.gender.weight, world.direction(Direction::Gender));
  cos["age"] = abs_cos(s.age.weight, world.direction(Direction::Age));
  cos["expression"] = abs_cos(s.expression.weight, world.direction(Direction::Expression));
  // True one-vs-all race axes live in the race plane; read their coordinates
  // back from the oracle's linear race scores.
  const LatentCode u1{std::vector<double>(world.direction(Direction::Race1).data(),
                                          world.direction(Direction::Race1).data() + world.dim()),
                      world.space_id()};
  const LatentCode u2{std::vector<double>(world.direction(Direction::Race2).data(),
                                          world.direction(Direction::Race2).data() + world.dim()),
                      world.space_id()};
  const auto r1 = world.true_attributes(u1).race_scores;
  const auto r2 = world.true_attributes(u2).race_scores;
  for (std::size_t r = 0; r < 3; ++r) {
    const Eigen::VectorXd axis = r1[r] * world.direction(Direction::Race1) + r2[r] * world.direction(Direction::Race2);
    cos["race_" + std::string(to_string(static_cast<Race>(r)))] = abs_cos(s.race[r].weight, axis);
  }
  double worst = 1.0;
  std::string detail;
  for (const auto& [k, v] : cos) {
    worst = std::min(worst, v);
    detail += fmt("%s %.4f ", k.c_str(), v);
  }
  const bool ok = worst >= kDirectionCosine && s_elapsed < kDirectionSeconds;
  return {ok, fmt("N=%d |cos| %s(min %.4f >= %.2f), %.1fs < %.0fs", kDirectionSamples, detail.c_str(), worst,
                  kDirectionCosine, s_elapsed, kDirectionSeconds)};
}

// ---------------------------------------------------------------------------

Outcome traversal_closed_form() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.05, 0.95);
  double worst = 0.0;
  int checked = 0;
  while (checked < kTraversalModels) {
    const int dim = 2 + static_cast<int>(rng() % 31);
    DirectionModel m;
    m.kind = ModelKind::LinearRegressor;
    m.attribute = checked % 2 ? Attribute::Age : Attribute::Expression;
    for (int k = 0; k < dim; ++k) m.weight.push_back(n(rng));
    m.bias = 0.3 * n(rng);
    LatentCode z;
    for (int k = 0; k < dim; ++k) z.values.push_back(0.3 * n(rng));
    z.space_id = "lin";
    const double target = u(rng);
    const double score = m.score(z.values);
    if (score >= target) continue;  // already past: d = 0 is covered by unit tests
    FaceRecord proto;
    proto.face_id = "f" + std::to_string(checked);
    proto.latent = z;
    TraversalSpec spec{.target = target, .max_distance = 1e6};
    const SequenceResult seq = make_attribute_sequence(proto, m, spec);
    const double expected = (target - score) / m.weight_norm();
    worst = std::max(worst, std::abs(seq.distance - expected));
    ++checked;
  }
  return {worst <= kTraversalTolerance,
          fmt("max |d - (target - score)/|w|| = %.3g over %d models (tol %.0e)", worst, kTraversalModels,
              kTraversalTolerance)};
}

// ---------------------------------------------------------------------------

struct ReplicationStats {
  int null_within = 0;
  std::vector<double> gaps;
  std::vector<double> q95;
  std::vector<double> dispersion;
  int ordering_ok = 0;
  int pose_ok = 0;
  int pose_strict = 0;
  std::string first_failure;
};

ReplicationStats null_replications(int threads) {
  ReplicationStats st;
  for (int r = 0; r < kNullReplications; ++r) {
    PipelineConfig c;  // desk defaults: 100 candidates -> 20 seeds, N = 5000, 9 annotators
    c.threads = threads;
    c.world.rng_seed = kNullSeedBase + static_cast<std::uint64_t>(r);
    c.analyze.analyzer.t_hcic = 0.3;
    c.analyze.null_fmr_points = {0.01, 0.1};
    c.models = {ModelConfig{EmbedderSpec{"null", 1, std::nullopt, true}, std::nullopt}};
    const MemoryRun run = run_in_memory(c);
    const ModelAnalysis& a = run.analysis.at("null");
    if (!a.null_test) throw Error(Errc::Inconsistent, "null test missing");
    st.null_within += a.null_test->within ? 1 : 0;
    st.gaps.push_back(a.null_test->observed);
    st.q95.push_back(a.null_test->ci_high);

    std::vector<double> disp;
    for (const HcicRecord& h : run.aggregate.hcic) disp.push_back(h.dispersion);
    st.dispersion.push_back(median(disp));

    const auto same = grouping_median(a.scored, Grouping::SameSeedSameGroup);
    const auto diff_seed = grouping_median(a.scored, Grouping::DiffSeedSameGroup);
    const auto diff_group = grouping_median(a.scored, Grouping::DiffGroup);
    const bool order = same && diff_seed && diff_group && *same > *diff_seed && *diff_seed > *diff_group;
    std::map<int, double> pose;
    for (const BoxStat& b : a.boxstats)
      if (b.grouping == Grouping::SameSeedSameGroup && b.attribute == Attribute::Pose) pose[b.bucket] = b.median;
    const bool have = pose.count(0) && pose.count(15) && pose.count(30);
    const bool decline = have && pose[30] <= pose[15] && pose[15] <= pose[0];
    st.ordering_ok += order ? 1 : 0;
    st.pose_ok += decline ? 1 : 0;
    st.pose_strict += have && pose[30] < pose[15] && pose[15] < pose[0] ? 1 : 0;
    if ((!order || !decline) && st.first_failure.empty()) {
      st.first_failure = fmt("; first failing world %llu: medians %.3f/%.3f/%.3f pose0/15/30 %.3f/%.3f/%.3f",
                             static_cast<unsigned long long>(c.world.rng_seed), same.value_or(NAN),
                             diff_seed.value_or(NAN), diff_group.value_or(NAN), pose[0], pose[15], pose[30]);
    }
  }
  return st;
}

// Gated on curves without self-slot pairs. A prototype paired with itself
// scores cosine 1 under every model, which caps the target's FNMR near 0.8
// while label flips can lift another group past that at FMR 0.01. The
// default (self-slots in) count is reported alongside.
Outcome bias_detection(int threads) {
  int detected = 0, detected_with_self = 0;
  for (int r = 0; r < kBiasReplications; ++r) {
    PipelineConfig c;
    c.threads = threads;
    c.world.rng_seed = kBiasSeedBase + static_cast<std::uint64_t>(r);
    c.models = {ModelConfig{EmbedderSpec{"biased", 3, BiasInjection{group_from_code("BF"), kBiasSeverity}, false},
                            std::nullopt}};
    const MemoryRun run = run_in_memory(c, MemoryRunOptions{.run_tests = false});
    const ModelAnalysis& m = run.analysis.at("biased");
    detected_with_self += m.dominance && m.dominance->all ? 1 : 0;

    std::map<std::string, HcicRecord> hcic;
    for (const HcicRecord& h : run.aggregate.hcic) hcic.emplace(h.pair_id, h);
    AnalyzerConfig ac = c.analyze.analyzer;
    ac.exclude_self_slots = true;
    const auto labeled = label_pairs(m.scored, hcic, ac.t_hcic, true);
    const StratifiedResult sr = stratified_curves(labeled, "biased", ac.t_hcic, ac);
    detected += check_dominance(sr.curves, group_from_code("BF"), ac.fmr_grid).all ? 1 : 0;
  }
  return {detected >= kBiasRequired,
          fmt("eta=%.1f on BF: targeted curve dominates on every attribute and FMR grid point in %d/%d replications "
              "(need >= %d); with self-slot pairs kept %d/%d",
              kBiasSeverity, detected, kBiasReplications, kBiasRequired, detected_with_self, kBiasReplications)};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).generic_string()] = read_text(e.path());
  return out;
}

struct DeskRun {
  Outcome determinism;
  double pair_dispersion = NAN;
};

DeskRun desk_determinism(const std::filesystem::path& config, const std::filesystem::path& out, int threads) {
  PipelineConfig c = load_config(config);
  c.threads = threads;
  std::map<std::string, std::string> snaps[2];
  for (int i = 0; i < 2; ++i) {
    c.out = out / ("desk_run" + std::to_string(i + 1));
    std::filesystem::remove_all(c.out);
    Pipeline(c).run(all_stages());
    snaps[i] = snapshot(c.out);
  }
  std::size_t differ = 0;
  std::set<std::string> names;
  for (const auto& s : snaps)
    for (const auto& [k, v] : s) names.insert(k);
  for (const std::string& k : names) {
    auto a = snaps[0].find(k);
    auto b = snaps[1].find(k);
    if (a == snaps[0].end() || b == snaps[1].end() || a->second != b->second) ++differ;
  }
  const auto pairs = read_jsonl<PairRecord>(out / "desk_run1" / "pairs.jsonl");
  std::size_t pos = 0;
  for (const PairRecord& p : pairs) pos += p.intended_kind == PairKind::Positive ? 1 : 0;
  const Json agg = Json::parse(snaps[0].at("aggregate_summary.json"));

  DeskRun r;
  r.pair_dispersion = agg["median_dispersion"]["pair_identity"].get<double>();
  r.determinism = {differ == 0 && !names.empty(),
                   fmt("%zu artifacts compared byte for byte, %zu differ (desk run: %zu positive / %zu negative pairs)",
                       names.size(), differ, pos, pairs.size() - pos)};
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biasbench acceptance gate"};
  std::string out = "acceptance_runs";
  std::string config = BIASBENCH_DESK_CONFIG;
  int threads = default_threads();
  app.add_option("--out", out, "scratch directory for pipeline runs");
  app.add_option("--config", config, "desk-scale config used for the determinism run");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  report("pair topology", [&] { return pair_topology(threads); });
  report("hcic oracle equivalence", hcic_oracle);
  report("max-min correctness", maxmin_oracle);
  report("fnmr/fmr oracle equivalence", curve_oracle);
  report("direction recovery", direction_recovery);
  report("traversal closed form", traversal_closed_form);

  ReplicationStats reps;
  report("null-bias calibration", [&] {
    reps = null_replications(threads);
    const auto [lo, hi] = std::minmax_element(reps.q95.begin(), reps.q95.end());
    return Outcome{reps.null_within >= kNullRequired,
                   fmt("eta=0: observed max gap at FMR {0.01, 0.1} inside the null 95%% band in %d/%d replications "
                       "(need >= %d); null q95 range [%.3f, %.3f]",
                       reps.null_within, kNullReplications, kNullRequired, *lo, *hi)};
  });
  report("bias detection", [&] { return bias_detection(threads); });

  DeskRun desk;
  bool desk_ran = false;
  auto run_desk = [&] {
    if (!desk_ran) {
      desk = desk_determinism(config, out, threads);
      desk_ran = true;
    }
  };
  report("annotator calibration", [&] {
    run_desk();
    const auto [lo, hi] = std::minmax_element(reps.dispersion.begin(), reps.dispersion.end());
    const bool ok = desk.pair_dispersion >= kDispersionLo && desk.pair_dispersion <= kDispersionHi;
    return Outcome{ok, fmt("default sigma_a: median per-pair dispersion %.4f in [%.2f, %.2f]; across the %zu null "
                           "worlds [%.4f, %.4f]",
                           desk.pair_dispersion, kDispersionLo, kDispersionHi, reps.dispersion.size(),
                           reps.dispersion.empty() ? NAN : *lo, reps.dispersion.empty() ? NAN : *hi)};
  });
  report("similarity ordering", [&] {
    const int n = static_cast<int>(reps.gaps.size());
    const bool ok = n == kOrderingReplications && reps.ordering_ok == n && reps.pose_ok == n;
    return Outcome{ok, fmt("same-seed > diff-seed > diff-group in %d/%d, pose medians 0>=15>=30 deg in %d/%d "
                           "(strict in %d)%s",
                           reps.ordering_ok, n, reps.pose_ok, n, reps.pose_strict, reps.first_failure.c_str())};
  });
  report("determinism", [&] {
    run_desk();
    return desk.determinism;
  });

  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
