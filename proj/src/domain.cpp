#include "biasbench/domain.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace biasbench {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<std::string_view, Enum>, N>& table,
                std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw Error(Errc::Parse, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, Gender>, 2> kGenderNames = {{
    {"Male", Gender::Male},
    {"Female", Gender::Female},
}};
constexpr std::array<std::pair<std::string_view, Race>, 3> kRaceNames = {{
    {"White", Race::White},
    {"Black", Race::Black},
    {"EastAsian", Race::EastAsian},
}};
constexpr std::array<std::pair<std::string_view, Attribute>, 8> kAttributeNames = {{
    {"Pose", Attribute::Pose},
    {"Lighting", Attribute::Lighting},
    {"Age", Attribute::Age},
    {"Expression", Attribute::Expression},
    {"Gender", Attribute::Gender},
    {"Race", Attribute::Race},
    {"SkinTone", Attribute::SkinTone},
    {"Uncanniness", Attribute::Uncanniness},
}};
constexpr std::array<std::pair<std::string_view, Light>, 5> kLightNames = {{
    {"neutral", Light::Neutral},
    {"up", Light::Up},
    {"down", Light::Down},
    {"left", Light::Left},
    {"right", Light::Right},
}};
constexpr std::array<std::pair<std::string_view, PairKind>, 2> kPairKindNames = {{
    {"Positive", PairKind::Positive},
    {"Negative", PairKind::Negative},
}};
constexpr std::array<std::pair<std::string_view, TaskKind>, 2> kTaskKindNames = {{
    {"PairIdentity", TaskKind::PairIdentity},
    {"SingleAttribute", TaskKind::SingleAttribute},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::array<std::pair<std::string_view, Enum>, N>& table) {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

}  // namespace

std::string DemographicGroup::code() const {
  std::string out;
  out += race == Race::White ? 'W' : race == Race::Black ? 'B' : 'A';
  out += gender == Gender::Male ? 'M' : 'F';
  return out;
}

int DemographicGroup::index() const {
  return static_cast<int>(race) * 2 + static_cast<int>(gender);
}

const std::array<DemographicGroup, kGroupCount>& all_groups() {
  static const std::array<DemographicGroup, kGroupCount> groups = {{
      {Gender::Male, Race::White},
      {Gender::Female, Race::White},
      {Gender::Male, Race::Black},
      {Gender::Female, Race::Black},
      {Gender::Male, Race::EastAsian},
      {Gender::Female, Race::EastAsian},
  }};
  return groups;
}

DemographicGroup group_from_code(std::string_view code) {
  for (const auto& g : all_groups()) {
    if (g.code() == code) return g;
  }
  throw Error(Errc::Parse, "unknown demographic group '" + std::string(code) + "'");
}

bool is_non_protected(Attribute a) {
  return std::find(kNonProtected.begin(), kNonProtected.end(), a) != kNonProtected.end();
}

int neutral_index(Attribute a) {
  switch (a) {
    case Attribute::Lighting: return 0;
    case Attribute::Pose:
    case Attribute::Age:
    case Attribute::Expression: return kSequenceLength / 2;
    default: break;
  }
  throw Error(Errc::InvalidArgument,
              "attribute " + std::string(to_string(a)) + " has no sequence");
}

std::string_view to_string(Gender g) { return name_of(g, kGenderNames); }
std::string_view to_string(Race r) { return name_of(r, kRaceNames); }
std::string_view to_string(Attribute a) { return name_of(a, kAttributeNames); }
std::string_view to_string(Light l) { return name_of(l, kLightNames); }
std::string_view to_string(PairKind k) { return name_of(k, kPairKindNames); }
std::string_view to_string(TaskKind k) { return name_of(k, kTaskKindNames); }
Gender parse_gender(std::string_view s) { return parse_enum(s, kGenderNames, "gender"); }
Race parse_race(std::string_view s) { return parse_enum(s, kRaceNames, "race"); }
Attribute parse_attribute(std::string_view s) { return parse_enum(s, kAttributeNames, "attribute"); }
Light parse_light(std::string_view s) { return parse_enum(s, kLightNames, "light"); }
PairKind parse_pair_kind(std::string_view s) { return parse_enum(s, kPairKindNames, "pair kind"); }
TaskKind parse_task_kind(std::string_view s) { return parse_enum(s, kTaskKindNames, "task kind"); }

bool LatentCode::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string Variant::key() const {
  if (is_prototype()) return "prototype";
  return std::string(to_string(*attribute)) + ":" + std::to_string(index);
}

std::string make_face_id(SeedId seed, const DemographicGroup& group, const Variant& variant) {
  Fnv1a h;
  h.update(seed).separator().update(group.code()).separator().update(variant.key());
  return "f" + hex64(h.digest());
}

std::string make_pair_id(const std::string& left, const std::string& right, PairKind kind,
                         Attribute attribute, int index) {
  Fnv1a h;
  h.update(left).separator().update(right).separator().update(to_string(kind));
  h.separator().update(to_string(attribute)).separator().update(static_cast<std::uint64_t>(index));
  return "p" + hex64(h.digest());
}

void validate_pair(const PairRecord& p) {
  if (p.pair_id.empty() || p.left.empty() || p.right.empty()) {
    throw Error(Errc::InvalidArgument, "pair record with empty id");
  }
  if (!is_non_protected(p.varied_attribute)) {
    throw Error(Errc::Inconsistent, "pair " + p.pair_id + " varies a protected attribute");
  }
  if (p.index < 0 || p.index >= kSequenceLength) {
    throw Error(Errc::OutOfRange, "pair " + p.pair_id + " slot index out of range");
  }
  if (p.cross_group) {
    if (p.intended_kind != PairKind::Negative || p.left_seed == p.right_seed ||
        p.group == p.right_group) {
      throw Error(Errc::Inconsistent, "cross-group pair " + p.pair_id + " must be a negative "
                                      "pair across seeds and groups");
    }
    return;
  }
  if (!(p.group == p.right_group)) {
    throw Error(Errc::Inconsistent, "pair " + p.pair_id + " crosses demographic groups");
  }
  if (p.intended_kind == PairKind::Positive && p.left_seed != p.right_seed) {
    throw Error(Errc::Inconsistent, "positive pair " + p.pair_id + " spans two seeds");
  }
  if (p.intended_kind == PairKind::Negative && p.left_seed == p.right_seed) {
    throw Error(Errc::Inconsistent, "negative pair " + p.pair_id + " shares a seed");
  }
}

void validate_annotation(const AnnotationRecord& a) {
  if (a.annotation_id.empty() || a.item_ref.empty() || a.worker_id.empty()) {
    throw Error(Errc::InvalidArgument, "annotation with empty id, item or worker");
  }
  if (a.score < kScoreMin || a.score > kScoreMax) {
    throw Error(Errc::OutOfRange,
                "annotation score " + std::to_string(a.score) + " outside 0..4");
  }
  if (a.task_kind == TaskKind::PairIdentity && a.attribute) {
    throw Error(Errc::Inconsistent, "pair identity annotations carry no attribute");
  }
  if (a.task_kind == TaskKind::SingleAttribute && !a.attribute) {
    throw Error(Errc::Inconsistent, "single-image annotation without attribute");
  }
}

std::vector<double> ThresholdGrid::values() const {
  if (points < 2 || !(hi > lo)) {
    throw Error(Errc::InvalidArgument, "threshold grid needs >= 2 points and hi > lo");
  }
  std::vector<double> out(static_cast<std::size_t>(points));
  const double span = hi - lo;
  const int last = points - 1;
  for (int j = 0; j < points; ++j) {
    out[static_cast<std::size_t>(j)] = lo + span * static_cast<double>(j) / last;
  }
  return out;
}

void AnalyzerConfig::validate() const {
  auto check_unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(Errc::OutOfRange, std::string(name) + " must lie in [0,1]");
    }
  };
  check_unit(t_hcic, "t_hcic");
  for (double t : t_hcic_set) check_unit(t, "t_hcic");
  check_unit(uncanny_max, "uncanny_max");
  const auto grid = threshold_sweep.values();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(Errc::InvalidArgument, "threshold grid must be strictly increasing");
    }
  }
  for (double f : fmr_grid) check_unit(f, "fmr grid point");
  if (bootstrap_resamples < 0) {
    throw Error(Errc::InvalidArgument, "bootstrap_resamples must be >= 0 (0 skips the resampling tests)");
  }
}

Dataset Dataset::build(std::vector<FaceRecord> records) {
  Dataset ds;
  std::sort(records.begin(), records.end(),
            [](const FaceRecord& a, const FaceRecord& b) { return a.face_id < b.face_id; });

  const FaceRecord* first = records.empty() ? nullptr : &records.front();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const FaceRecord& r = records[i];
    if (r.face_id.empty()) throw Error(Errc::InvalidArgument, "face record with empty id");
    if (i > 0 && records[i - 1].face_id == r.face_id) {
      throw Error(Errc::DuplicateId, "duplicate face_id " + r.face_id);
    }
    if (!r.latent.all_finite()) {
      throw Error(Errc::InvalidArgument, "face " + r.face_id + " has a non-finite latent");
    }
    if (r.latent.dim() != first->latent.dim() || r.latent.space_id != first->latent.space_id) {
      throw Error(Errc::Inconsistent, "face " + r.face_id + " is not in the dataset latent space");
    }

    const bool neutral_render = r.pose_deg == 0.0 && r.light == Light::Neutral;
    if (r.variant.is_prototype()) {
      if (!neutral_render) {
        throw Error(Errc::Inconsistent, "prototype " + r.face_id + " must have 0 pose and neutral light");
      }
    } else {
      const Attribute a = *r.variant.attribute;
      const int idx = r.variant.index;
      if (!is_non_protected(a) || idx < 0 || idx >= kSequenceLength) {
        throw Error(Errc::OutOfRange, "face " + r.face_id + " has variant " + r.variant.key() +
                                          " outside the sequence range");
      }
      if (idx == neutral_index(a)) {
        throw Error(Errc::Inconsistent, "face " + r.face_id +
                                            " occupies a neutral slot; that slot is the prototype");
      }
      bool ok = false;
      switch (a) {
        case Attribute::Pose:
          ok = r.pose_deg == kPoseAnglesDeg[static_cast<std::size_t>(idx)] && r.light == Light::Neutral;
          break;
        case Attribute::Lighting:
          ok = r.pose_deg == 0.0 && r.light == kLightingSequence[static_cast<std::size_t>(idx)];
          break;
        default:
          ok = neutral_render;
          break;
      }
      if (!ok) {
        throw Error(Errc::Inconsistent,
                    "face " + r.face_id + " render parameters disagree with variant " + r.variant.key());
      }
    }

    auto key = std::make_tuple(r.seed_id, r.group.index(), r.variant.key());
    if (!ds.by_slot_.emplace(std::move(key), i).second) {
      throw Error(Errc::DuplicateId, "duplicate (seed, group, variant) at face " + r.face_id);
    }
    ds.by_id_.emplace(r.face_id, i);
  }
  ds.records_ = std::move(records);
  return ds;
}

const FaceRecord* Dataset::find(std::string_view face_id) const {
  auto it = by_id_.find(face_id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

const FaceRecord& Dataset::at(std::string_view face_id) const {
  const FaceRecord* r = find(face_id);
  if (!r) throw Error(Errc::NotFound, "unknown face " + std::string(face_id));
  return *r;
}

const FaceRecord* Dataset::find(SeedId seed, const DemographicGroup& group,
                                const Variant& variant) const {
  auto it = by_slot_.find(std::make_tuple(seed, group.index(), variant.key()));
  return it == by_slot_.end() ? nullptr : &records_[it->second];
}

std::vector<const FaceRecord*> Dataset::prototypes() const {
  std::vector<const FaceRecord*> out;
  for (const auto& [key, idx] : by_slot_) {
    if (std::get<2>(key) == "prototype") out.push_back(&records_[idx]);
  }
  return out;
}

std::size_t Dataset::prototype_count() const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(),
                                                [](const FaceRecord& r) { return r.variant.is_prototype(); }));
}

std::vector<SeedId> Dataset::seeds() const {
  std::vector<SeedId> out;
  for (const auto& [key, idx] : by_slot_) {
    if (out.empty() || out.back() != std::get<0>(key)) out.push_back(std::get<0>(key));
  }
  return out;
}

std::array<std::string, kSequenceLength> Dataset::sequence(SeedId seed, const DemographicGroup& group,
                                                           Attribute attribute) const {
  std::array<std::string, kSequenceLength> out;
  const int neutral = neutral_index(attribute);
  for (int i = 0; i < kSequenceLength; ++i) {
    const Variant v = i == neutral ? Variant::prototype() : Variant::slot(attribute, i);
    const FaceRecord* r = find(seed, group, v);
    if (!r) {
      throw Error(Errc::NotFound, "seed " + std::to_string(seed) + " group " + group.code() +
                                      " is missing " + std::string(to_string(attribute)) +
                                      " slot " + std::to_string(i));
    }
    out[static_cast<std::size_t>(i)] = r->face_id;
  }
  return out;
}

int unique_faces_per_prototype(int sequence_length, int attributes) {
  return 1 + attributes * (sequence_length - 1);
}

}  // namespace biasbench
