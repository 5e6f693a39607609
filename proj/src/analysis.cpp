#include "biasbench/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "biasbench/parallel.hpp"

namespace biasbench {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(Errc::InvalidArgument, "embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                                           std::to_string(b.size()));
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) throw Error(Errc::Degenerate, "zero-norm embedding");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.model_id != b.model_id)
    throw Error(Errc::Inconsistent, "embeddings from different models: " + a.model_id + ", " + b.model_id);
  return cosine_similarity(std::span<const double>(a.values), std::span<const double>(b.values));
}

EmbeddingIndex index_embeddings(std::vector<EmbeddingVector> embeddings) {
  EmbeddingIndex out;
  for (EmbeddingVector& e : embeddings) {
    std::string id = e.face_id;
    if (!out.emplace(id, std::move(e)).second) throw Error(Errc::DuplicateId, "duplicate embedding for " + id);
  }
  return out;
}

std::vector<ScoredPair> score_pairs(std::span<const PairRecord> pairs, const EmbeddingIndex& embeddings) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const PairRecord& p : pairs) {
    auto l = embeddings.find(p.left);
    auto r = embeddings.find(p.right);
    if (l == embeddings.end()) throw Error(Errc::NotFound, "no embedding for face " + p.left);
    if (r == embeddings.end()) throw Error(Errc::NotFound, "no embedding for face " + p.right);
    ScoredPair s;
    s.pair_id = p.pair_id;
    s.cosine = cosine_similarity(l->second, r->second);
    s.intended_kind = p.intended_kind;
    s.group = p.group;
    s.right_group = p.right_group;
    s.varied_attribute = p.varied_attribute;
    s.index = p.index;
    s.left_seed = p.left_seed;
    s.right_seed = p.right_seed;
    s.is_self_slot = p.is_self_slot;
    s.cross_group = p.cross_group;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredPair> label_pairs(std::span<const ScoredPair> scored, const std::map<std::string, HcicRecord>& hcic,
                                    double t_hcic, bool drop_missing) {
  if (!std::isfinite(t_hcic) || t_hcic < 0.0 || t_hcic > 1.0)
    throw Error(Errc::InvalidArgument, "t_hcic must lie in [0, 1]");
  std::vector<ScoredPair> out;
  out.reserve(scored.size());
  for (const ScoredPair& s : scored) {
    auto it = hcic.find(s.pair_id);
    if (it == hcic.end()) {
      if (drop_missing) continue;
      throw Error(Errc::NotFound, "no HCIC for pair " + s.pair_id);
    }
    ScoredPair l = s;
    l.hcic = it->second.hcic;
    l.label = it->second.hcic <= t_hcic ? PairKind::Positive : PairKind::Negative;
    out.push_back(std::move(l));
  }
  return out;
}

namespace {

void split_by_label(std::span<const ScoredPair> scored, std::vector<double>& pos, std::vector<double>& neg) {
  for (const ScoredPair& s : scored) {
    if (!s.label) throw Error(Errc::InvalidArgument, "pair " + s.pair_id + " has no ground-truth label");
    (*s.label == PairKind::Positive ? pos : neg).push_back(s.cosine);
  }
  if (pos.empty() || neg.empty())
    throw Error(Errc::Degenerate, "stratum needs at least one positive and one negative pair (" +
                                      std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) +
                                      " negative)");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
}

CurvePoint point_at(const std::vector<double>& pos, const std::vector<double>& neg, double t) {
  CurvePoint c;
  c.threshold = t;
  c.positives = pos.size();
  c.negatives = neg.size();
  c.false_rejects = static_cast<std::size_t>(std::lower_bound(pos.begin(), pos.end(), t) - pos.begin());
  c.false_accepts = neg.size() - static_cast<std::size_t>(std::lower_bound(neg.begin(), neg.end(), t) - neg.begin());
  c.fnmr = static_cast<double>(c.false_rejects) / static_cast<double>(c.positives);
  c.fmr = static_cast<double>(c.false_accepts) / static_cast<double>(c.negatives);
  return c;
}

}  // namespace

std::vector<CurvePoint> fnmr_fmr(std::span<const ScoredPair> scored, std::span<const double> thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw Error(Errc::InvalidArgument, "thresholds must be strictly increasing");
  std::vector<double> pos, neg;
  split_by_label(scored, pos, neg);
  std::vector<CurvePoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back(point_at(pos, neg, t));
  return out;
}

CurvePoint operating_point(std::span<const ScoredPair> scored, double threshold) {
  std::vector<double> pos, neg;
  split_by_label(scored, pos, neg);
  return point_at(pos, neg, threshold);
}

double fnmr_at_fmr(std::span<const CurvePoint> curve, double fmr) {
  for (const CurvePoint& c : curve)
    if (c.fmr <= fmr) return c.fnmr;
  return 1.0;
}

StratifiedResult stratified_curves(std::span<const ScoredPair> labeled, const std::string& model_id, double t_hcic,
                                   const AnalyzerConfig& config) {
  const std::vector<double> grid = config.threshold_sweep.values();
  std::map<std::pair<int, int>, std::vector<ScoredPair>> strata;
  for (const ScoredPair& s : labeled) {
    if (s.cross_group) continue;
    if (config.exclude_self_slots && s.is_self_slot) continue;
    strata[{static_cast<int>(s.varied_attribute), s.group.index()}].push_back(s);
  }
  StratifiedResult out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", t_hcic);
  for (Attribute attr : kNonProtected) {
    for (const DemographicGroup& g : all_groups()) {
      auto it = strata.find({static_cast<int>(attr), g.index()});
      const std::string where = model_id + " " + std::string(to_string(attr)) + " " + g.code() + " t_hcic=" + buf;
      if (it == strata.end()) {
        out.notes.push_back("skipped " + where + ": no pairs");
        continue;
      }
      try {
        BiasCurve c;
        c.model_id = model_id;
        c.attribute = attr;
        c.group = g;
        c.t_hcic = t_hcic;
        c.points = fnmr_fmr(it->second, grid);
        c.operating = operating_point(it->second, config.fixed_threshold);
        out.curves.push_back(std::move(c));
      } catch (const Error& e) {
        if (e.code() != Errc::Degenerate) throw;
        out.notes.push_back("skipped " + where + ": " + e.what());
      }
    }
  }
  return out;
}

DominanceResult check_dominance(std::span<const BiasCurve> curves, const DemographicGroup& target,
                                std::span<const double> fmr_grid) {
  std::map<Attribute, std::vector<const BiasCurve*>> by_attr;
  for (const BiasCurve& c : curves) by_attr[c.attribute].push_back(&c);
  DominanceResult r;
  r.all = !by_attr.empty();
  for (const auto& [attr, list] : by_attr) {
    const BiasCurve* tc = nullptr;
    for (const BiasCurve* c : list)
      if (c->group == target) tc = c;
    bool ok = tc != nullptr && list.size() == static_cast<std::size_t>(kGroupCount);
    for (double f : fmr_grid) {
      if (!ok) break;
      const double ft = fnmr_at_fmr(tc->points, f);
      for (const BiasCurve* c : list)
        if (c != tc && !(ft > fnmr_at_fmr(c->points, f))) ok = false;
    }
    r.per_attribute[attr] = ok;
    r.all = r.all && ok;
  }
  return r;
}

double max_group_gap(std::span<const BiasCurve> curves, std::span<const double> fmr_points) {
  std::map<Attribute, std::vector<const BiasCurve*>> by_attr;
  for (const BiasCurve& c : curves) by_attr[c.attribute].push_back(&c);
  double gap = 0.0;
  for (const auto& [attr, list] : by_attr) {
    for (double f : fmr_points) {
      double lo = 1.0, hi = 0.0;
      for (const BiasCurve* c : list) {
        const double v = fnmr_at_fmr(c->points, f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (list.size() > 1) gap = std::max(gap, hi - lo);
    }
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Resampling. Each cosine is reduced to its grid bin (number of thresholds
// <= cosine), so a resample costs one histogram per stratum and reproduces
// the curve counts exactly: cosine >= t_k iff bin > k.

namespace {

struct BinnedStratum {
  std::vector<int> pos;
  std::vector<int> neg;
};

using BinnedAttribute = std::array<BinnedStratum, kGroupCount>;

std::map<Attribute, BinnedAttribute> bin_strata(std::span<const ScoredPair> labeled, const std::vector<double>& grid,
                                                const AnalyzerConfig& config) {
  std::map<Attribute, BinnedAttribute> out;
  for (const ScoredPair& s : labeled) {
    if (s.cross_group || (config.exclude_self_slots && s.is_self_slot)) continue;
    if (!is_non_protected(s.varied_attribute)) continue;
    if (!s.label) throw Error(Errc::InvalidArgument, "pair " + s.pair_id + " has no ground-truth label");
    const int bin = static_cast<int>(std::upper_bound(grid.begin(), grid.end(), s.cosine) - grid.begin());
    BinnedStratum& st = out[s.varied_attribute][s.group.index()];
    (*s.label == PairKind::Positive ? st.pos : st.neg).push_back(bin);
  }
  return out;
}

// FNMR at the first grid threshold with FMR <= f, from bin histograms.
class BinCurve {
 public:
  explicit BinCurve(std::size_t grid_size) : pos_(grid_size + 1, 0), neg_(grid_size + 1, 0) {}

  void reset() {
    std::fill(pos_.begin(), pos_.end(), 0);
    std::fill(neg_.begin(), neg_.end(), 0);
    n_pos_ = n_neg_ = 0;
  }
  void add_pos(int bin) { ++pos_[bin], ++n_pos_; }
  void add_neg(int bin) { ++neg_[bin], ++n_neg_; }
  bool valid() const { return n_pos_ > 0 && n_neg_ > 0; }

  void fnmr_at(std::span<const double> fmr_points, std::span<double> out) const {
    const std::size_t T = pos_.size() - 1;
    std::fill(out.begin(), out.end(), 1.0);
    std::vector<bool> done(fmr_points.size(), false);
    std::size_t remaining = fmr_points.size();
    std::size_t cum_pos = 0, cum_neg = 0;
    for (std::size_t k = 0; k < T && remaining > 0; ++k) {
      cum_pos += pos_[k];
      cum_neg += neg_[k];
      const double fmr = static_cast<double>(n_neg_ - cum_neg) / static_cast<double>(n_neg_);
      const double fnmr = static_cast<double>(cum_pos) / static_cast<double>(n_pos_);
      for (std::size_t i = 0; i < fmr_points.size(); ++i) {
        if (!done[i] && fmr <= fmr_points[i]) {
          out[i] = fnmr;
          done[i] = true;
          --remaining;
        }
      }
    }
  }

 private:
  std::vector<std::size_t> pos_;
  std::vector<std::size_t> neg_;
  std::size_t n_pos_ = 0;
  std::size_t n_neg_ = 0;
};

// max over fmr points of (max_g - min_g) for one attribute; groups lacking a
// valid curve are skipped.
double attribute_gap(std::array<BinCurve, kGroupCount>& curves, std::span<const double> fmr_points) {
  std::vector<double> lo(fmr_points.size(), 1.0), hi(fmr_points.size(), 0.0), v(fmr_points.size());
  int valid = 0;
  for (BinCurve& c : curves) {
    if (!c.valid()) continue;
    ++valid;
    c.fnmr_at(fmr_points, v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  }
  if (valid < 2) return 0.0;
  double gap = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) gap = std::max(gap, hi[i] - lo[i]);
  return gap;
}

std::array<BinCurve, kGroupCount> make_curves(std::size_t grid_size) {
  return {BinCurve(grid_size), BinCurve(grid_size), BinCurve(grid_size),
          BinCurve(grid_size), BinCurve(grid_size), BinCurve(grid_size)};
}

double observed_gap(const std::map<Attribute, BinnedAttribute>& strata, std::size_t grid_size,
                    std::span<const double> fmr_points) {
  double gap = 0.0;
  auto curves = make_curves(grid_size);
  for (const auto& [attr, groups] : strata) {
    for (int g = 0; g < kGroupCount; ++g) {
      curves[g].reset();
      for (int b : groups[g].pos) curves[g].add_pos(b);
      for (int b : groups[g].neg) curves[g].add_neg(b);
    }
    gap = std::max(gap, attribute_gap(curves, fmr_points));
  }
  return gap;
}

template <typename Resample>
std::vector<double> resample_stats(int resamples, std::uint64_t seed, Resample&& resample) {
  if (resamples < 1) throw Error(Errc::InvalidArgument, "resampling needs bootstrap_resamples >= 1");
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  parallel_for(stats.size(), 1, [&](std::size_t r) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(r) + 1)));
    stats[r] = resample(rng);
  });
  std::sort(stats.begin(), stats.end());
  return stats;
}

void check_fmr_points(std::span<const double> fmr_points) {
  if (fmr_points.empty()) throw Error(Errc::InvalidArgument, "no FMR points given");
  for (double f : fmr_points)
    if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::InvalidArgument, "FMR point outside [0, 1]");
}

}  // namespace

GapTest null_gap_test(std::span<const ScoredPair> labeled, std::span<const double> fmr_points,
                      const AnalyzerConfig& config) {
  check_fmr_points(fmr_points);
  const std::vector<double> grid = config.threshold_sweep.values();
  const auto strata = bin_strata(labeled, grid, config);
  GapTest t;
  t.resamples = config.bootstrap_resamples;
  t.observed = observed_gap(strata, grid.size(), fmr_points);

  struct Pooled {
    std::vector<int> pos, neg;
    std::array<std::size_t, kGroupCount> n_pos{}, n_neg{};
  };
  std::vector<Pooled> pooled;
  for (const auto& [attr, groups] : strata) {
    Pooled p;
    for (int g = 0; g < kGroupCount; ++g) {
      p.pos.insert(p.pos.end(), groups[g].pos.begin(), groups[g].pos.end());
      p.neg.insert(p.neg.end(), groups[g].neg.begin(), groups[g].neg.end());
      p.n_pos[g] = groups[g].pos.size();
      p.n_neg[g] = groups[g].neg.size();
    }
    pooled.push_back(std::move(p));
  }

  const auto stats = resample_stats(config.bootstrap_resamples, config.bootstrap_seed, [&](std::mt19937_64& rng) {
    auto curves = make_curves(grid.size());
    double gap = 0.0;
    for (const Pooled& p : pooled) {
      for (int g = 0; g < kGroupCount; ++g) {
        curves[g].reset();
        if (p.n_pos[g] == 0 || p.n_neg[g] == 0) continue;
        std::uniform_int_distribution<std::size_t> pick_pos(0, p.pos.size() - 1), pick_neg(0, p.neg.size() - 1);
        for (std::size_t i = 0; i < p.n_pos[g]; ++i) curves[g].add_pos(p.pos[pick_pos(rng)]);
        for (std::size_t i = 0; i < p.n_neg[g]; ++i) curves[g].add_neg(p.neg[pick_neg(rng)]);
      }
      gap = std::max(gap, attribute_gap(curves, fmr_points));
    }
    return gap;
  });
  t.ci_low = 0.0;
  t.ci_high = percentile_sorted(stats, 0.95);
  t.within = t.observed <= t.ci_high;
  return t;
}

GapTest bootstrap_gap_ci(std::span<const ScoredPair> labeled, std::span<const double> fmr_points,
                         const AnalyzerConfig& config) {
  check_fmr_points(fmr_points);
  const std::vector<double> grid = config.threshold_sweep.values();
  const auto strata = bin_strata(labeled, grid, config);
  GapTest t;
  t.resamples = config.bootstrap_resamples;
  t.observed = observed_gap(strata, grid.size(), fmr_points);
  const auto stats = resample_stats(config.bootstrap_resamples, config.bootstrap_seed ^ 0xc1c1c1c1ull,
                                    [&](std::mt19937_64& rng) {
    auto curves = make_curves(grid.size());
    double gap = 0.0;
    for (const auto& [attr, groups] : strata) {
      for (int g = 0; g < kGroupCount; ++g) {
        curves[g].reset();
        const BinnedStratum& st = groups[g];
        if (st.pos.empty() || st.neg.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick_pos(0, st.pos.size() - 1), pick_neg(0, st.neg.size() - 1);
        for (std::size_t i = 0; i < st.pos.size(); ++i) curves[g].add_pos(st.pos[pick_pos(rng)]);
        for (std::size_t i = 0; i < st.neg.size(); ++i) curves[g].add_neg(st.neg[pick_neg(rng)]);
      }
      gap = std::max(gap, attribute_gap(curves, fmr_points));
    }
    return gap;
  });
  t.ci_low = percentile_sorted(stats, 0.025);
  t.ci_high = percentile_sorted(stats, 0.975);
  t.within = t.observed >= t.ci_low && t.observed <= t.ci_high;
  return t;
}

// ---------------------------------------------------------------------------
// Similarity distributions

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::SameSeedSameGroup: return "same-seed-same-group";
    case Grouping::DiffSeedSameGroup: return "diff-seed-same-group";
    case Grouping::DiffGroup: return "diff-group";
  }
  return "?";
}

Grouping grouping_of(const ScoredPair& p) {
  if (p.cross_group || !(p.group == p.right_group)) return Grouping::DiffGroup;
  return p.left_seed == p.right_seed ? Grouping::SameSeedSameGroup : Grouping::DiffSeedSameGroup;
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(Errc::InvalidArgument, "percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

int bucket_of(const ScoredPair& p) {
  if (p.varied_attribute == Attribute::Pose)
    return static_cast<int>(std::lround(std::fabs(kPoseAnglesDeg.at(static_cast<std::size_t>(p.index)))));
  return p.index;
}

}  // namespace

std::vector<BoxStat> similarity_boxstats(std::span<const ScoredPair> scored) {
  std::map<std::tuple<int, int, int>, std::vector<double>> buckets;
  for (const ScoredPair& s : scored) {
    if (!is_non_protected(s.varied_attribute)) continue;
    buckets[{static_cast<int>(grouping_of(s)), static_cast<int>(s.varied_attribute), bucket_of(s)}].push_back(
        s.cosine);
  }
  std::vector<BoxStat> out;
  for (auto& [key, values] : buckets) {
    std::sort(values.begin(), values.end());
    BoxStat b;
    b.grouping = static_cast<Grouping>(std::get<0>(key));
    b.attribute = static_cast<Attribute>(std::get<1>(key));
    b.bucket = std::get<2>(key);
    b.count = values.size();
    b.median = percentile_sorted(values, 0.5);
    b.p15 = percentile_sorted(values, 0.15);
    b.p85 = percentile_sorted(values, 0.85);
    out.push_back(b);
  }
  return out;
}

std::optional<double> grouping_median(std::span<const ScoredPair> scored, Grouping grouping) {
  std::vector<double> v;
  for (const ScoredPair& s : scored)
    if (grouping_of(s) == grouping) v.push_back(s.cosine);
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  return percentile_sorted(v, 0.5);
}

}  // namespace biasbench
