#include <doctest.h>

#include <map>
#include <set>

#include "biasbench/pairs.hpp"
#include "support.hpp"

using namespace biasbench;
using biasbench::testing::toy_faces;

TEST_CASE("pair counts follow the count law") {
  for (int seeds : {4, 20}) {
    const Dataset d = Dataset::build(toy_faces(seeds));
    const std::size_t p = d.prototype_count();
    CHECK(build_positive_pairs(d).size() == p * 20);
    for (int n_other : {0, 1, 3}) CHECK(build_negative_pairs(d, n_other, 7).size() == p * 20 * n_other);
  }
  const Dataset d = Dataset::build(toy_faces(20));
  CHECK(build_positive_pairs(d).size() == 2400);
  CHECK(build_negative_pairs(d, 3, 7).size() == 7200);
}

TEST_CASE("positive pairs share seed and group and include one self slot per sequence") {
  const Dataset d = Dataset::build(toy_faces(3));
  const auto pos = build_positive_pairs(d);
  std::map<std::pair<std::string, Attribute>, int> self;
  std::map<std::string, int> per_group;
  for (const PairRecord& p : pos) {
    CHECK(p.intended_kind == PairKind::Positive);
    CHECK(p.left_seed == p.right_seed);
    CHECK(p.group == p.right_group);
    CHECK(d.at(p.left).variant.is_prototype());
    CHECK(p.is_self_slot == (p.left == p.right));
    if (p.is_self_slot) {
      ++self[{p.left, p.varied_attribute}];
      CHECK(p.index == neutral_index(p.varied_attribute));
    }
    ++per_group[p.group.code()];
    CHECK_NOTHROW(validate_pair(p));
  }
  CHECK(self.size() == d.prototype_count() * 4);
  for (const auto& [k, n] : self) CHECK(n == 1);
  for (const auto& [g, n] : per_group) CHECK(n * 6 == static_cast<int>(pos.size()));
}

TEST_CASE("one prototype's pose pairs") {
  const Dataset d = Dataset::build(toy_faces(1));
  const FaceRecord* proto = d.find(0, all_groups()[0], Variant::prototype());
  int pose = 0, self = 0;
  for (const PairRecord& p : build_positive_pairs(d)) {
    if (p.left != proto->face_id || p.varied_attribute != Attribute::Pose) continue;
    ++pose;
    if (p.is_self_slot) {
      ++self;
      CHECK(d.at(p.right).pose_deg == 0.0);
    }
  }
  CHECK(pose == 5);
  CHECK(self == 1);
}

TEST_CASE("negative pairs stay within one group and span distinct seeds") {
  const Dataset d = Dataset::build(toy_faces(6));
  const auto neg = build_negative_pairs(d, 3, 11);
  std::map<std::string, std::set<SeedId>> partners;
  for (const PairRecord& p : neg) {
    CHECK(p.intended_kind == PairKind::Negative);
    CHECK(p.group == p.right_group);
    CHECK(d.at(p.left).group == d.at(p.right).group);
    CHECK(p.left_seed != p.right_seed);
    CHECK_FALSE(p.cross_group);
    partners[p.left].insert(p.right_seed);
    CHECK_NOTHROW(validate_pair(p));
  }
  for (const auto& [left, seeds] : partners) CHECK(seeds.size() == 3);
}

TEST_CASE("negative pairing depends on the rng seed but not on order") {
  const Dataset d = Dataset::build(toy_faces(8));
  CHECK(build_negative_pairs(d, 2, 5) == build_negative_pairs(d, 2, 5));
  CHECK(build_negative_pairs(d, 2, 5) != build_negative_pairs(d, 2, 6));
  auto faces = toy_faces(8);
  std::reverse(faces.begin(), faces.end());
  CHECK(build_negative_pairs(Dataset::build(faces), 2, 5) == build_negative_pairs(d, 2, 5));
}

TEST_CASE("too few prototypes for n_other") {
  const Dataset d = Dataset::build(toy_faces(2));
  CHECK_THROWS_AS(build_negative_pairs(d, 2, 1), Error);
  CHECK_THROWS_AS(build_negative_pairs(d, -1, 1), Error);
}

TEST_CASE("cross-group diagnostic pairs cross groups") {
  const Dataset d = Dataset::build(toy_faces(4));
  const auto cross = build_cross_group_pairs(d, 1, 3);
  CHECK_FALSE(cross.empty());
  for (const PairRecord& p : cross) {
    CHECK(p.cross_group);
    CHECK(p.group != p.right_group);
    CHECK(p.intended_kind == PairKind::Negative);
    CHECK_NOTHROW(validate_pair(p));
  }
}

TEST_CASE("pair ids are unique and summaries add up") {
  const Dataset d = Dataset::build(toy_faces(5));
  auto pairs = build_positive_pairs(d);
  const auto neg = build_negative_pairs(d, 2, 1);
  pairs.insert(pairs.end(), neg.begin(), neg.end());
  std::set<std::string> ids;
  for (const PairRecord& p : pairs) ids.insert(p.pair_id);
  CHECK(ids.size() == pairs.size());
  const PairSummary s = summarize_pairs(pairs);
  CHECK(s.total_positive == 600);
  CHECK(s.total_negative == 1200);
  CHECK(s.self_slots == 120);
  std::size_t sum = 0;
  for (const auto& [k, n] : s.positive) sum += n;
  CHECK(sum == 600);
  CHECK(s.to_text().find("positive") != std::string::npos);
}
