#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

class World;

struct TrainingLabels {
  int gender = 0;  // 1 = Male
  int race = 0;    // index of Race
  double age = 0.0;
  double expression = 0.0;

  friend bool operator==(const TrainingLabels&, const TrainingLabels&) = default;
};

struct TrainingEntry {
  LatentCode latent;
  TrainingLabels labels;
  std::optional<std::string> image_ref;

  friend bool operator==(const TrainingEntry&, const TrainingEntry&) = default;
};

struct TrainingSet {
  std::vector<TrainingEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t dim() const { return entries.empty() ? 0 : entries.front().latent.dim(); }
  void validate() const;
};

// Labels every latent with the world's attribute oracle (the stand-in for a
// pretrained attribute classifier).
TrainingSet label_with_oracle(const World& world, std::vector<LatentCode> latents);

void to_json(Json& j, const TrainingEntry& e);
void from_json(const Json& j, TrainingEntry& e);

enum class ModelKind { LinearSVM, LinearRegressor };

struct DirectionModel {
  ModelKind kind = ModelKind::LinearSVM;
  Attribute attribute = Attribute::Gender;
  // Class treated as +1 by an SVM (Gender: 1 = Male; Race: race index).
  std::optional<int> positive_class;
  std::vector<double> weight;
  double bias = 0.0;
  // Training accuracy for SVMs, R^2 for regressors.
  double diagnostic = 0.0;
  int iterations = 0;
  bool converged = true;

  double score(std::span<const double> z) const;
  double weight_norm() const;
  std::vector<double> unit_normal() const;
};

void to_json(Json& j, const DirectionModel& m);
void from_json(const Json& j, DirectionModel& m);

struct SvmOptions {
  // lambda in  lambda/2 |w|^2 + mean_i hinge(y_i (w.x_i + b)).
  double regularization = 1.0;
  // Stop when the projected-gradient spread of the dual falls below this.
  double tolerance = 1e-6;
  int max_epochs = 20000;
  std::uint64_t shuffle_seed = 0;
};

// Linear hinge-loss SVM trained by dual coordinate descent. The bias is an
// extra constant feature and is regularized with the weights.
DirectionModel fit_svm(const TrainingSet& train, Attribute attribute, int positive_class,
                       const SvmOptions& options = {});

// Same solver on raw (x, y in {-1,+1}) data.
DirectionModel fit_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       const SvmOptions& options = {});

struct RegressorOptions {
  double ridge = 1e-6;  // applied to weights only, never to the intercept
};

DirectionModel fit_regressor(const TrainingSet& train, Attribute attribute,
                             const RegressorOptions& options = {});
DirectionModel fit_regressor(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                             const RegressorOptions& options = {});

struct DirectionSet {
  DirectionModel gender;
  std::array<DirectionModel, 3> race;  // one-vs-all, indexed by Race
  DirectionModel age;
  DirectionModel expression;
};

void to_json(Json& j, const DirectionSet& s);
void from_json(const Json& j, DirectionSet& s);

DirectionSet fit_direction_set(const TrainingSet& train, const SvmOptions& svm = {},
                               const RegressorOptions& regressor = {});

struct PrototypeOptions {
  // Required SVM decision score past the boundary, in decision units.
  double margin_target = 1.0;
  // Cap on the length of each single displacement.
  double max_distance = 10.0;
  bool gender_first = true;
};

// Six prototypes of one seed, in all_groups() order. Each is reached by
// closed-form displacement along the gender SVM normal and then the target
// race's one-vs-all normal (or the reverse order). Throws Unreachable when a
// displacement exceeds the cap.
std::array<FaceRecord, kGroupCount> make_prototypes(SeedId seed, const LatentCode& seed_latent,
                                                    const DirectionModel& gender_model,
                                                    const std::array<DirectionModel, 3>& race_models,
                                                    const PrototypeOptions& options = {});

struct TraversalSpec {
  double target = 0.8;
  int steps = 2;  // n; sequence length is 2n + 1
  double max_distance = 10.0;
  double search_step = 0.05;
  double tolerance = 1e-6;

  void validate() const;
};

TraversalSpec age_traversal();
TraversalSpec expression_traversal();

struct TraversalDistance {
  double distance = 0.0;
  bool truncated = false;
};

// Smallest d >= 0 with model.score(z + d * w_hat) >= target: coarse stepping
// followed by bisection down to spec.tolerance.
TraversalDistance find_traversal_distance(const LatentCode& z, const DirectionModel& model,
                                          const TraversalSpec& spec);

struct SequenceResult {
  std::vector<FaceRecord> faces;  // 2n + 1 slots; slot n is the prototype
  double distance = 0.0;
  bool degenerate = false;
  bool truncated = false;
};

SequenceResult make_attribute_sequence(const FaceRecord& prototype, const DirectionModel& model,
                                       const TraversalSpec& spec);

std::array<FaceRecord, kSequenceLength> make_pose_sequence(const FaceRecord& prototype);
std::array<FaceRecord, kSequenceLength> make_lighting_sequence(const FaceRecord& prototype);

}  // namespace biasbench
