#include "biasbench/pairs.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace biasbench {

namespace {

PairRecord make_pair(const FaceRecord& left, const FaceRecord& right, PairKind kind, Attribute attribute,
                     int index) {
  PairRecord p;
  p.left = left.face_id;
  p.right = right.face_id;
  p.intended_kind = kind;
  p.varied_attribute = attribute;
  p.index = index;
  p.left_seed = left.seed_id;
  p.right_seed = right.seed_id;
  p.group = left.group;
  p.right_group = right.group;
  p.is_self_slot = left.face_id == right.face_id;
  p.cross_group = !(left.group == right.group);
  p.pair_id = make_pair_id(p.left, p.right, kind, attribute, index);
  return p;
}

void append_sequence_pairs(const Dataset& ds, const FaceRecord& left, const FaceRecord& partner,
                           PairKind kind, std::vector<PairRecord>& out) {
  for (Attribute a : kNonProtected) {
    const auto seq = ds.sequence(partner.seed_id, partner.group, a);
    for (int i = 0; i < kSequenceLength; ++i) {
      out.push_back(make_pair(left, ds.at(seq[static_cast<std::size_t>(i)]), kind, a, i));
    }
  }
}

template <typename Eligible>
std::vector<PairRecord> build_partner_pairs(const Dataset& ds, int n_other, std::uint64_t rng_seed,
                                            Eligible eligible) {
  if (n_other < 0) throw Error(Errc::InvalidArgument, "n_other must be >= 0");
  std::vector<PairRecord> out;
  if (n_other == 0) return out;
  const auto protos = ds.prototypes();
  for (const FaceRecord* p : protos) {
    std::vector<const FaceRecord*> candidates;
    for (const FaceRecord* q : protos) {
      if (q->seed_id != p->seed_id && eligible(*p, *q)) candidates.push_back(q);
    }
    if (candidates.size() < static_cast<std::size_t>(n_other)) {
      throw Error(Errc::InvalidArgument, "group " + p->group.code() + " has too few prototypes for " +
                                             std::to_string(n_other) + " partners");
    }
    std::mt19937_64 rng(mix64(rng_seed ^ fnv1a(p->face_id)));
    // Partial Fisher-Yates over the (seed, group)-ordered candidates.
    for (int k = 0; k < n_other; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), candidates.size() - 1);
      std::swap(candidates[static_cast<std::size_t>(k)], candidates[pick(rng)]);
      append_sequence_pairs(ds, *p, *candidates[static_cast<std::size_t>(k)], PairKind::Negative, out);
    }
  }
  return out;
}

}  // namespace

std::vector<PairRecord> build_positive_pairs(const Dataset& ds) {
  std::vector<PairRecord> out;
  for (const FaceRecord* p : ds.prototypes()) append_sequence_pairs(ds, *p, *p, PairKind::Positive, out);
  return out;
}

std::vector<PairRecord> build_negative_pairs(const Dataset& ds, int n_other, std::uint64_t rng_seed) {
  return build_partner_pairs(ds, n_other, rng_seed, [](const FaceRecord& p, const FaceRecord& q) {
    return p.group == q.group;
  });
}

std::vector<PairRecord> build_cross_group_pairs(const Dataset& ds, int n_other, std::uint64_t rng_seed) {
  return build_partner_pairs(ds, n_other, rng_seed ^ 0x5a5a5a5aull,
                             [](const FaceRecord& p, const FaceRecord& q) { return !(p.group == q.group); });
}

PairSummary summarize_pairs(std::span<const PairRecord> pairs) {
  PairSummary s;
  for (const auto& p : pairs) {
    auto key = std::make_pair(p.group.code(), std::string(to_string(p.varied_attribute)));
    if (p.intended_kind == PairKind::Positive) {
      ++s.positive[key];
      ++s.total_positive;
    } else {
      ++s.negative[key];
      ++s.total_negative;
    }
    if (p.is_self_slot) ++s.self_slots;
  }
  return s;
}

std::string PairSummary::to_text() const {
  std::ostringstream os;
  os << "positive " << total_positive << "  negative " << total_negative << "  self-slots " << self_slots
     << '\n';
  os << "group  attribute    positive  negative\n";
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> rows;
  for (const auto& [k, v] : positive) rows[k].first = v;
  for (const auto& [k, v] : negative) rows[k].second = v;
  for (const auto& [k, v] : rows) {
    os << k.first << "     ";
    os << k.second << std::string(k.second.size() < 13 ? 13 - k.second.size() : 1, ' ');
    os << v.first << "\t" << v.second << '\n';
  }
  return os.str();
}

}  // namespace biasbench
