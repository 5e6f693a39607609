#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

struct SeedPool {
  std::vector<SeedId> base;      // S_B
  std::vector<SeedId> filtered;  // S_F, in selection order
  // Min-distance D(s) at the step each filtered seed was chosen; the initial
  // seed has none.
  std::vector<std::optional<double>> selection_distances;
};

void to_json(Json& j, const SeedPool& p);
void from_json(const Json& j, SeedPool& p);

struct SeedScreening {
  SeedId seed = 0;
  // Normalized uncanniness per prototype in [0,1]; lower is more realistic.
  std::array<double, kGroupCount> uncanniness{};
  // Fraction of prototypes perceived as their intended group.
  double agreement = 0.0;
};

// Ranking key, best first: no prototype at or above `uncanny_max`, then higher
// agreement, then higher mean realism (1 - uncanniness), then lower seed id.
// Returns the top `keep` seeds as the base pool, in rank order.
SeedPool screen_seeds(std::span<const SeedScreening> candidates, std::size_t keep,
                      double uncanny_max = 0.8);

// Per-seed mesh features, one row per demographic group (any consistent count).
using MeshTable = std::map<SeedId, std::vector<std::vector<double>>>;

// Farthest-point selection: S_F starts with the initial seed (S_B[0] unless
// given), then repeatedly adds the remaining seed maximizing
//   D(s) = min over f in S_F, g of |M(s,g) - M(f,g)|_2,
// ties broken by lowest seed id, until |S_F| = n.
SeedPool maxmin_filter(const SeedPool& pool, const MeshTable& mesh, std::size_t n,
                       std::optional<SeedId> initial = std::nullopt);

}  // namespace biasbench
