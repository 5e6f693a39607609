#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "biasbench/curation.hpp"

using namespace biasbench;

namespace {

SeedScreening screening(SeedId s, double agreement, double uncanny) {
  SeedScreening r;
  r.seed = s;
  r.agreement = agreement;
  r.uncanniness.fill(uncanny);
  return r;
}

SeedPool base_pool(std::vector<SeedId> seeds) {
  SeedPool p;
  p.base = std::move(seeds);
  return p;
}

}  // namespace

TEST_CASE("screening keeps the requested number") {
  std::vector<SeedScreening> c;
  for (SeedId s = 0; s < 1000; ++s) c.push_back(screening(s, (s % 7) / 7.0, (s % 5) / 10.0));
  CHECK(screen_seeds(c, 300).base.size() == 300);
  CHECK_THROWS_AS(screen_seeds(c, 1001), Error);
}

TEST_CASE("screening ties fall back to seed id") {
  std::vector<SeedScreening> c;
  for (SeedId s : {9, 3, 7, 1, 5}) c.push_back(screening(s, 1.0, 0.2));
  CHECK(screen_seeds(c, 3).base == std::vector<SeedId>{1, 3, 5});
}

TEST_CASE("an unrealistic prototype ranks a seed below every realistic one") {
  std::vector<SeedScreening> c;
  for (SeedId s = 0; s < 10; ++s) c.push_back(screening(s, 0.5, 0.3));
  SeedScreening flagged = screening(100, 1.0, 0.0);
  flagged.uncanniness[4] = 0.8;
  c.insert(c.begin(), flagged);
  const SeedPool p = screen_seeds(c, 11);
  CHECK(p.base.back() == 100);
}

TEST_CASE("agreement then realism order the ranking") {
  std::vector<SeedScreening> c = {screening(1, 0.5, 0.1), screening(2, 1.0, 0.5), screening(3, 1.0, 0.2)};
  CHECK(screen_seeds(c, 3).base == std::vector<SeedId>{3, 2, 1});
}

TEST_CASE("max-min filter on a one-dimensional toy") {
  MeshTable mesh;
  for (SeedId s : {0, 1, 5, 6}) mesh[s] = {{static_cast<double>(s)}};
  const SeedPool out = maxmin_filter(base_pool({0, 1, 5, 6}), mesh, 3, SeedId{0});
  CHECK(out.filtered == std::vector<SeedId>{0, 6, 1});
  REQUIRE(out.selection_distances.size() == 3);
  CHECK_FALSE(out.selection_distances[0].has_value());
  CHECK(*out.selection_distances[1] == 6.0);
  CHECK(*out.selection_distances[2] == 1.0);
}

TEST_CASE("max-min filter defaults to the first base seed and exhausts to a permutation") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n;
  MeshTable mesh;
  std::vector<SeedId> base;
  for (SeedId s = 10; s < 25; ++s) {
    base.push_back(s);
    mesh[s] = {{n(rng), n(rng)}, {n(rng), n(rng)}};
  }
  std::shuffle(base.begin(), base.end(), rng);
  const SeedPool out = maxmin_filter(base_pool(base), mesh, base.size());
  CHECK(out.filtered.front() == base.front());
  std::vector<SeedId> a = out.filtered, b = base;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("max-min distances never increase and each step is optimal") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    MeshTable mesh;
    std::vector<SeedId> base;
    const int size = 2 + static_cast<int>(rng() % 19);
    for (int s = 0; s < size; ++s) {
      base.push_back(static_cast<SeedId>(s * 3 + 1));
      mesh[base.back()] = {{n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)}};
    }
    const SeedPool out = maxmin_filter(base_pool(base), mesh, static_cast<std::size_t>(size));
    auto dist = [&](SeedId a, SeedId b) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < mesh[a].size(); ++g) {
        double s = 0.0;
        for (std::size_t k = 0; k < mesh[a][g].size(); ++k) s += std::pow(mesh[a][g][k] - mesh[b][g][k], 2);
        best = std::min(best, std::sqrt(s));
      }
      return best;
    };
    for (std::size_t i = 2; i < out.filtered.size(); ++i)
      CHECK(*out.selection_distances[i] <= *out.selection_distances[i - 1]);
    for (std::size_t i = 1; i < out.filtered.size(); ++i) {
      std::vector<SeedId> chosen(out.filtered.begin(), out.filtered.begin() + static_cast<long>(i));
      for (SeedId s : base) {
        if (std::find(chosen.begin(), chosen.end(), s) != chosen.end()) continue;
        double d = std::numeric_limits<double>::infinity();
        for (SeedId f : chosen) d = std::min(d, dist(s, f));
        CHECK(d <= *out.selection_distances[i] + 1e-12);
      }
    }
  }
}

TEST_CASE("max-min filter errors") {
  MeshTable mesh;
  mesh[1] = {{0.0}};
  mesh[2] = {{1.0}};
  CHECK_THROWS_AS(maxmin_filter(base_pool({1, 2}), mesh, 3), Error);
  CHECK_THROWS_AS(maxmin_filter(base_pool({1, 2, 3}), mesh, 2), Error);
  CHECK_THROWS_AS(maxmin_filter(base_pool({1, 2}), mesh, 2, SeedId{9}), Error);
}

TEST_CASE("seed pool round-trips") {
  SeedPool p;
  p.base = {1, 2, 3};
  p.filtered = {2, 3};
  p.selection_distances = {std::nullopt, 0.5};
  const SeedPool back = Json(p).get<SeedPool>();
  CHECK(back.base == p.base);
  CHECK(back.filtered == p.filtered);
  CHECK(back.selection_distances == p.selection_distances);
}
