#include "biasbench/curation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace biasbench {

void to_json(Json& j, const SeedPool& p) {
  Json selected = Json::array();
  for (std::size_t i = 0; i < p.filtered.size(); ++i) {
    const auto& d = i < p.selection_distances.size() ? p.selection_distances[i] : std::nullopt;
    selected.push_back(Json{{"seed_id", p.filtered[i]}, {"min_distance", d ? Json(*d) : Json(nullptr)}});
  }
  j = Json{{"base", p.base}, {"selected", selected}};
}

void from_json(const Json& j, SeedPool& p) {
  j.at("base").get_to(p.base);
  p.filtered.clear();
  p.selection_distances.clear();
  for (const Json& s : j.at("selected")) {
    p.filtered.push_back(s.at("seed_id").get<SeedId>());
    const Json& d = s.at("min_distance");
    p.selection_distances.push_back(d.is_null() ? std::nullopt : std::optional<double>(d.get<double>()));
  }
}

SeedPool screen_seeds(std::span<const SeedScreening> candidates, std::size_t keep, double uncanny_max) {
  if (keep > candidates.size()) {
    throw Error(Errc::InvalidArgument, "cannot keep " + std::to_string(keep) + " of " +
                                           std::to_string(candidates.size()) + " seeds");
  }
  struct Ranked {
    bool realistic;
    double agreement;
    double realism;
    SeedId seed;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(candidates.size());
  for (const auto& c : candidates) {
    bool realistic = true;
    double realism = 0.0;
    for (double u : c.uncanniness) {
      realistic = realistic && u < uncanny_max;
      realism += 1.0 - u;
    }
    ranked.push_back({realistic, c.agreement, realism / kGroupCount, c.seed});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return std::make_tuple(!a.realistic, -a.agreement, -a.realism, a.seed) <
           std::make_tuple(!b.realistic, -b.agreement, -b.realism, b.seed);
  });
  SeedPool pool;
  for (std::size_t i = 0; i < keep; ++i) pool.base.push_back(ranked[i].seed);
  return pool;
}

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

SeedPool maxmin_filter(const SeedPool& pool, const MeshTable& mesh, std::size_t n,
                       std::optional<SeedId> initial) {
  const auto& base = pool.base;
  if (n > base.size()) {
    throw Error(Errc::InvalidArgument, "cannot select " + std::to_string(n) + " of " +
                                           std::to_string(base.size()) + " seeds");
  }
  std::vector<const std::vector<std::vector<double>>*> rows;
  rows.reserve(base.size());
  for (SeedId s : base) {
    auto it = mesh.find(s);
    if (it == mesh.end()) throw Error(Errc::NotFound, "no mesh features for seed " + std::to_string(s));
    rows.push_back(&it->second);
  }
  if (!rows.empty()) {
    const std::size_t groups = rows.front()->size();
    const std::size_t dim = groups ? rows.front()->front().size() : 0;
    for (const auto* r : rows) {
      if (r->size() != groups || groups == 0) throw Error(Errc::Inconsistent, "mesh table group counts differ");
      for (const auto& f : *r) {
        if (f.size() != dim) throw Error(Errc::Inconsistent, "mesh feature dimensions differ");
      }
    }
  }

  SeedPool out;
  out.base = base;
  if (n == 0) return out;

  std::size_t first = 0;
  if (initial) {
    auto it = std::find(base.begin(), base.end(), *initial);
    if (it == base.end()) throw Error(Errc::NotFound, "initial seed is not in the base pool");
    first = static_cast<std::size_t>(it - base.begin());
  }

  // Running min-distance of every candidate to the selected set.
  std::vector<double> min_dist(base.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(base.size(), false);
  auto absorb = [&](std::size_t chosen) {
    taken[chosen] = true;
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (taken[i]) continue;
      for (std::size_t g = 0; g < rows[i]->size(); ++g) {
        min_dist[i] = std::min(min_dist[i], distance((*rows[i])[g], (*rows[chosen])[g]));
      }
    }
  };

  out.filtered.push_back(base[first]);
  out.selection_distances.push_back(std::nullopt);
  absorb(first);
  while (out.filtered.size() < n) {
    std::size_t best = base.size();
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (taken[i]) continue;
      if (best == base.size() || min_dist[i] > min_dist[best] ||
          (min_dist[i] == min_dist[best] && base[i] < base[best])) {
        best = i;
      }
    }
    out.filtered.push_back(base[best]);
    out.selection_distances.push_back(min_dist[best]);
    absorb(best);
  }
  return out;
}

}  // namespace biasbench
