#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "biasbench/domain.hpp"

namespace biasbench {

// (prototype, slot) for every slot of every non-protected sequence of every
// prototype: 20 pairs per prototype, neutral self-slots included and flagged.
std::vector<PairRecord> build_positive_pairs(const Dataset& dataset);

// Each prototype against all 20 sequence slots of `n_other` distinct other
// prototypes of its own group. Partner choice is keyed by (rng_seed, face_id),
// so it does not depend on iteration order.
std::vector<PairRecord> build_negative_pairs(const Dataset& dataset, int n_other, std::uint64_t rng_seed);

// Diagnostic pairs across seeds and groups; not part of the benchmark set.
std::vector<PairRecord> build_cross_group_pairs(const Dataset& dataset, int n_other, std::uint64_t rng_seed);

struct PairSummary {
  // (group code, attribute) -> count
  std::map<std::pair<std::string, std::string>, std::size_t> positive;
  std::map<std::pair<std::string, std::string>, std::size_t> negative;
  std::size_t total_positive = 0;
  std::size_t total_negative = 0;
  std::size_t self_slots = 0;

  std::string to_text() const;
};

PairSummary summarize_pairs(std::span<const PairRecord> pairs);

}  // namespace biasbench
