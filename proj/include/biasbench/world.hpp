#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "biasbench/domain.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

// Latent directions of the stand-in generator. The first three are protected,
// age/expression are the traversable non-protected ones, realism drives the
// uncanniness oracle.
enum class Direction { Gender, Race1, Race2, Age, Expression, Realism };
inline constexpr int kDirectionCount = 6;

struct BiasInjection {
  DemographicGroup group;
  double severity = 0.0;  // eta >= 0, relative to the clean embedding norm

  friend bool operator==(const BiasInjection&, const BiasInjection&) = default;
};

struct WorldSpec {
  int latent_dim = 32;
  std::uint64_t rng_seed = 1;
  int embed_dim = 64;
  int mesh_dim = 16;
  // Unit vectors indexed by Direction; pairwise orthonormal.
  std::array<std::vector<double>, kDirectionCount> directions;
  std::optional<BiasInjection> bias_injection;
  double annotator_noise = 0.4;    // sigma_a on the [0,1] raw response scale
  double annotator_bias_sd = 0.05; // spread of per-worker offsets
  double identity_drift = 0.1;     // rho

  // Stand-in embedder gains.
  double demographic_gain = 0.35;
  double attribute_gain = 0.2;
  double pose_gain = 0.5;   // perturbation magnitude at |pose| = 30 degrees
  double light_gain = 0.45; // perturbation magnitude at intensity 1
  // Distance squashing scale for true_pair_distance.
  double distance_scale = 6.0;

  // Fresh spec whose directions are an orthonormalized Gaussian draw keyed by
  // rng_seed.
  static WorldSpec generate(std::uint64_t rng_seed, int latent_dim = 32);

  void validate() const;
  std::string space_id() const;
  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

void to_json(Json& j, const WorldSpec& w);
void from_json(const Json& j, WorldSpec& w);
void to_json(Json& j, const BiasInjection& b);
void from_json(const Json& j, BiasInjection& b);

struct AttributeScores {
  double gender = 0.5;                 // P(male)
  std::array<double, 3> race_scores{}; // linear scores, indexed by Race
  Race race = Race::White;
  double age = 0.5;
  double expression = 0.5;
  double skin_tone = 0.5;
  double uncanniness = 0.0;

  DemographicGroup group() const;
};

struct MeshFeature {
  std::string face_id;
  std::vector<double> values;
};

// One stand-in recognition model. Different seeds give different random
// projections, i.e. different "networks" over the same world.
struct EmbedderSpec {
  std::string model_id = "standin";
  std::uint64_t seed = 0;
  // Overrides the world's bias injection when set.
  std::optional<BiasInjection> bias_injection;
  bool inherit_world_bias = true;
};

class World;

class StandInEmbedder {
 public:
  StandInEmbedder(const World& world, EmbedderSpec spec);

  const std::string& model_id() const { return spec_.model_id; }
  const std::optional<BiasInjection>& bias() const { return bias_; }

  EmbeddingVector embed(const FaceRecord& face) const;
  // Unit-norm embedding without the bias term; used by tests and to build the
  // biased vector.
  Eigen::VectorXd clean_embedding(const FaceRecord& face) const;

 private:
  const World* world_;
  EmbedderSpec spec_;
  std::optional<BiasInjection> bias_;
  Eigen::MatrixXd identity_map_;    // embed_dim x latent_dim
  Eigen::MatrixXd demographic_map_; // embed_dim x 3, orthonormal columns
  Eigen::MatrixXd attribute_map_;   // embed_dim x 2, orthonormal columns
  std::array<Eigen::VectorXd, 2> pose_dirs_;  // negative, positive yaw
  std::array<Eigen::VectorXd, 5> light_dirs_; // indexed by Light
};

// Deterministic analytic world: every member is a pure function of its WorldSpec and
// its arguments. Safe for concurrent use.
class World {
 public:
  explicit World(WorldSpec spec);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const WorldSpec& spec() const { return spec_; }
  int dim() const { return spec_.latent_dim; }
  const std::string& space_id() const { return space_id_; }
  const Eigen::VectorXd& direction(Direction d) const {
    return directions_[static_cast<std::size_t>(d)];
  }

  // i.i.d. standard normal latents. `stream` separates independent uses
  // (training pool, seed pool, tests) under one rng_seed.
  std::vector<LatentCode> sample_latents(int count, std::uint64_t stream = 0) const;

  AttributeScores true_attributes(const LatentCode& z) const;
  // Oracle response in [0,1] for a single-image annotation attribute.
  double true_score(const FaceRecord& face, Attribute attribute) const;

  // z minus its projections onto all six directions.
  std::vector<double> identity_component(const LatentCode& z) const;

  // Embedding under the default model (world bias injection applies).
  EmbeddingVector embed(const FaceRecord& face) const;
  MeshFeature mesh_features(const FaceRecord& face) const;

  // Ground-truth perceptual identity distance in [0,1].
  double true_pair_distance(const FaceRecord& a, const FaceRecord& b) const;

  Eigen::Map<const Eigen::VectorXd> view(const LatentCode& z) const;

 private:
  friend class StandInEmbedder;

  void check(const LatentCode& z) const;

  WorldSpec spec_;
  std::string space_id_;
  std::array<Eigen::VectorXd, kDirectionCount> directions_;
  std::array<Eigen::Vector2d, 3> race_axes_;
  Eigen::MatrixXd mesh_map_;       // mesh_dim x latent_dim
  Eigen::MatrixXd mesh_attr_map_;  // mesh_dim x 5
  Eigen::VectorXd mesh_mean_;
  Eigen::VectorXd mesh_pose_;
  StandInEmbedder default_embedder_;
};

double sigmoid(double x);

}  // namespace biasbench
