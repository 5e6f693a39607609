#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

double cosine_similarity(std::span<const double> a, std::span<const double> b);
// Also checks that both vectors come from the same model.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

using EmbeddingIndex = std::map<std::string, EmbeddingVector, std::less<>>;
EmbeddingIndex index_embeddings(std::vector<EmbeddingVector> embeddings);

struct ScoredPair {
  std::string pair_id;
  double cosine = 0.0;
  // Ground truth from HCIC only; unset until label_pairs runs.
  std::optional<PairKind> label;
  std::optional<double> hcic;
  PairKind intended_kind = PairKind::Positive;
  DemographicGroup group;
  DemographicGroup right_group;
  Attribute varied_attribute = Attribute::Pose;
  int index = 0;
  SeedId left_seed = 0;
  SeedId right_seed = 0;
  bool is_self_slot = false;
  bool cross_group = false;
};

// Cosine for every pair under one model. Throws NotFound for a face without
// an embedding.
std::vector<ScoredPair> score_pairs(std::span<const PairRecord> pairs, const EmbeddingIndex& embeddings);

// Positive iff hcic <= t_hcic. Pairs without an HCIC record throw NotFound
// unless `drop_missing`, in which case they are left out of the result.
std::vector<ScoredPair> label_pairs(std::span<const ScoredPair> scored, const std::map<std::string, HcicRecord>& hcic,
                                    double t_hcic, bool drop_missing = false);

struct CurvePoint {
  double threshold = 0.0;
  double fnmr = 0.0;
  double fmr = 0.0;
  std::size_t false_rejects = 0;
  std::size_t positives = 0;
  std::size_t false_accepts = 0;
  std::size_t negatives = 0;
};

// Accept iff cosine >= t. Thresholds must be strictly increasing. Throws
// Degenerate when the set lacks positives or negatives.
std::vector<CurvePoint> fnmr_fmr(std::span<const ScoredPair> scored, std::span<const double> thresholds);
CurvePoint operating_point(std::span<const ScoredPair> scored, double threshold);

// FNMR at the first threshold whose FMR is <= fmr (1 when none qualifies).
double fnmr_at_fmr(std::span<const CurvePoint> curve, double fmr);

struct BiasCurve {
  std::string model_id;
  Attribute attribute = Attribute::Pose;
  DemographicGroup group;
  double t_hcic = 0.0;
  std::vector<CurvePoint> points;
  CurvePoint operating;
};

struct StratifiedResult {
  std::vector<BiasCurve> curves;  // attribute-major, groups in all_groups() order
  std::vector<std::string> notes; // one line per skipped stratum
};

// One curve per (non-protected attribute, group) over the labeled pairs.
// Cross-group pairs never enter; self-slot pairs only unless excluded.
StratifiedResult stratified_curves(std::span<const ScoredPair> labeled, const std::string& model_id, double t_hcic,
                                   const AnalyzerConfig& config);

// Targeted group's FNMR strictly above every other group's at every fmr_grid
// point, separately for each attribute that has all six curves.
struct DominanceResult {
  std::map<Attribute, bool> per_attribute;
  bool all = false;
};

DominanceResult check_dominance(std::span<const BiasCurve> curves, const DemographicGroup& target,
                                std::span<const double> fmr_grid);

// Max over attributes and fmr points of (max_g FNMR - min_g FNMR).
double max_group_gap(std::span<const BiasCurve> curves, std::span<const double> fmr_points);

struct GapTest {
  double observed = 0.0;
  double ci_low = 0.0;   // percentile bounds of the resampled statistic
  double ci_high = 0.0;
  bool within = false;   // observed <= ci_high
  int resamples = 0;
};

// Null calibration of max_group_gap: within each attribute, positives and
// negatives are pooled across groups and each group is redrawn from the pool
// with replacement at its own size. The interval is [0, q95] of the null
// statistic; `within` tests the observed gap against its upper end.
GapTest null_gap_test(std::span<const ScoredPair> labeled, std::span<const double> fmr_points,
                      const AnalyzerConfig& config);

// Percentile 95% interval of max_group_gap when pairs are resampled within
// each (attribute, group) stratum.
GapTest bootstrap_gap_ci(std::span<const ScoredPair> labeled, std::span<const double> fmr_points,
                         const AnalyzerConfig& config);

enum class Grouping { SameSeedSameGroup, DiffSeedSameGroup, DiffGroup };
std::string_view to_string(Grouping g);
Grouping grouping_of(const ScoredPair& p);

struct BoxStat {
  Grouping grouping = Grouping::SameSeedSameGroup;
  Attribute attribute = Attribute::Pose;
  // |pose angle| in degrees for Pose, otherwise the sequence slot.
  int bucket = 0;
  std::size_t count = 0;
  double median = 0.0;
  double p15 = 0.0;
  double p85 = 0.0;
};

// Linear-interpolation percentile on a sorted sample, q in [0,1].
double percentile_sorted(std::span<const double> sorted, double q);

std::vector<BoxStat> similarity_boxstats(std::span<const ScoredPair> scored);

// Median cosine over every pair of one grouping (all attributes pooled).
std::optional<double> grouping_median(std::span<const ScoredPair> scored, Grouping grouping);

}  // namespace biasbench
