#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "biasbench/ids.hpp"

namespace biasbench {

using SeedId = std::uint64_t;

enum class Gender { Male, Female };
enum class Race { White, Black, EastAsian };

struct DemographicGroup {
  Gender gender = Gender::Male;
  Race race = Race::White;

  // WM, WF, BM, BF, AM, AF
  std::string code() const;
  // Position in all_groups(), 0..5.
  int index() const;

  friend bool operator==(const DemographicGroup&, const DemographicGroup&) = default;
  friend auto operator<=>(const DemographicGroup& a, const DemographicGroup& b) {
    return a.index() <=> b.index();
  }
};

inline constexpr int kGroupCount = 6;
const std::array<DemographicGroup, kGroupCount>& all_groups();
DemographicGroup group_from_code(std::string_view code);

// Non-protected attributes are varied along sequences; Gender and Race are the
// protected ones; SkinTone and Uncanniness exist only as annotation targets.
enum class Attribute { Pose, Lighting, Age, Expression, Gender, Race, SkinTone, Uncanniness };

inline constexpr std::array<Attribute, 4> kNonProtected = {
    Attribute::Pose, Attribute::Lighting, Attribute::Age, Attribute::Expression};
inline constexpr int kSequenceLength = 5;

bool is_non_protected(Attribute a);
// Sequence slot occupied by the unmodified prototype: the middle slot for
// pose/age/expression, slot 0 (neutral light) for lighting.
int neutral_index(Attribute a);

enum class Light { Neutral, Up, Down, Left, Right };

inline constexpr std::array<double, kSequenceLength> kPoseAnglesDeg = {-30.0, -15.0, 0.0, 15.0, 30.0};
inline constexpr std::array<Light, kSequenceLength> kLightingSequence = {
    Light::Neutral, Light::Up, Light::Down, Light::Left, Light::Right};
inline constexpr double kLightIntensity = 0.7;

std::string_view to_string(Gender g);
std::string_view to_string(Race r);
std::string_view to_string(Attribute a);
std::string_view to_string(Light l);
Gender parse_gender(std::string_view s);
Race parse_race(std::string_view s);
Attribute parse_attribute(std::string_view s);
Light parse_light(std::string_view s);

struct LatentCode {
  std::vector<double> values;
  std::string space_id;

  std::size_t dim() const { return values.size(); }
  bool all_finite() const;
  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

// Either the prototype itself or slot `index` of one attribute sequence.
struct Variant {
  std::optional<Attribute> attribute;
  int index = 0;

  static Variant prototype() { return {}; }
  static Variant slot(Attribute a, int index) { return {a, index}; }
  bool is_prototype() const { return !attribute.has_value(); }
  std::string key() const;

  friend bool operator==(const Variant&, const Variant&) = default;
};

struct FaceRecord {
  std::string face_id;
  SeedId seed_id = 0;
  DemographicGroup group;
  Variant variant;
  LatentCode latent;
  double pose_deg = 0.0;
  Light light = Light::Neutral;
  double light_intensity = 0.0;
  std::optional<std::string> image_ref;
  bool background_removed = false;

  friend bool operator==(const FaceRecord&, const FaceRecord&) = default;
};

std::string make_face_id(SeedId seed, const DemographicGroup& group, const Variant& variant);

enum class PairKind { Positive, Negative };
std::string_view to_string(PairKind k);
PairKind parse_pair_kind(std::string_view s);

struct PairRecord {
  std::string pair_id;
  std::string left;
  std::string right;
  PairKind intended_kind = PairKind::Positive;
  Attribute varied_attribute = Attribute::Pose;
  // Sequence slot of the right face within its attribute sequence.
  int index = 0;
  SeedId left_seed = 0;
  SeedId right_seed = 0;
  DemographicGroup group;
  // Set only on diagnostic cross-group pairs; otherwise equals `group`.
  DemographicGroup right_group;
  bool is_self_slot = false;
  bool cross_group = false;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

std::string make_pair_id(const std::string& left, const std::string& right, PairKind kind,
                         Attribute attribute, int index);
// Throws Inconsistent when the seed/group topology contradicts the kind.
void validate_pair(const PairRecord& p);

enum class TaskKind { PairIdentity, SingleAttribute };
std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view s);

// Pair scale: 0 = likely same ... 4 = likely different.
inline constexpr int kScoreMin = 0;
inline constexpr int kScoreMax = 4;

struct AnnotationRecord {
  std::string annotation_id;
  TaskKind task_kind = TaskKind::PairIdentity;
  std::string item_ref;
  std::optional<Attribute> attribute;
  std::string worker_id;
  int score = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

void validate_annotation(const AnnotationRecord& a);

struct HcicRecord {
  std::string pair_id;
  double hcic = 0.0;
  int n_scores = 0;
  double dispersion = 0.0;
  // Trimmed with the floor(k/4) rule because k != 9.
  bool trimmed_fallback = false;

  friend bool operator==(const HcicRecord&, const HcicRecord&) = default;
};

struct EmbeddingVector {
  std::string face_id;
  std::vector<double> values;
  std::string model_id;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct ThresholdGrid {
  double lo = -1.0;
  double hi = 1.0;
  int points = 513;

  std::vector<double> values() const;
};

struct AnalyzerConfig {
  double t_hcic = 0.3;
  std::vector<double> t_hcic_set = {0.2, 0.3, 0.4};
  double uncanny_max = 0.8;
  double fixed_threshold = 0.6;
  ThresholdGrid threshold_sweep;
  std::vector<double> fmr_grid = {0.01, 0.02, 0.05, 0.1, 0.2};
  int bootstrap_resamples = 1000;  // 0 skips the resampling tests
  std::uint64_t bootstrap_seed = 20231;
  bool exclude_self_slots = false;

  void validate() const;
};

// Read-only index over one synthesized dataset. Iteration order is by face_id.
class Dataset {
 public:
  Dataset() = default;

  // register_dataset: validates ids, variant ranges and group/variant
  // consistency, then builds the seed/group/variant indices.
  static Dataset build(std::vector<FaceRecord> records);

  std::span<const FaceRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const FaceRecord* find(std::string_view face_id) const;
  const FaceRecord& at(std::string_view face_id) const;

  const FaceRecord* find(SeedId seed, const DemographicGroup& group, const Variant& variant) const;

  // Prototype records in (seed, group) order.
  std::vector<const FaceRecord*> prototypes() const;
  std::size_t prototype_count() const;
  std::vector<SeedId> seeds() const;

  // Face ids of the full five-slot sequence for `attribute`, with the neutral
  // slot resolved to the prototype. Throws NotFound when any slot is missing.
  std::array<std::string, kSequenceLength> sequence(SeedId seed, const DemographicGroup& group,
                                                    Attribute attribute) const;

 private:
  std::vector<FaceRecord> records_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::map<std::tuple<SeedId, int, std::string>, std::size_t> by_slot_;
};

// Unique faces per prototype: 1 + sum over attributes of (length - 1).
int unique_faces_per_prototype(int sequence_length = kSequenceLength,
                               int attributes = static_cast<int>(kNonProtected.size()));

}  // namespace biasbench
