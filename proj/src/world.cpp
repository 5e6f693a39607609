#include "biasbench/world.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace biasbench {

namespace {

constexpr std::array<const char*, kDirectionCount> kDirectionNames = {
    "gender", "race1", "race2", "age", "expression", "realism"};

// Independent RNG streams under one world seed.
enum StreamTag : std::uint64_t {
  kTagDirections = 0x11,
  kTagSampling = 0x22,
  kTagMesh = 0x33,
  kTagEmbedder = 0x44,
  kTagBiasNoise = 0x55,
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
  return std::mt19937_64(mix64(mix64(seed ^ (tag << 56)) ^ extra));
}

Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = scale * normal(rng);
  }
  return m;
}

// Modified Gram-Schmidt, two passes.
Eigen::MatrixXd orthonormal_columns(Eigen::MatrixXd m) {
  for (int pass = 0; pass < 2; ++pass) {
    for (int c = 0; c < m.cols(); ++c) {
      for (int k = 0; k < c; ++k) m.col(c) -= m.col(k).dot(m.col(c)) * m.col(k);
      m.col(c).normalize();
    }
  }
  return m;
}

Eigen::VectorXd unit_gaussian(std::mt19937_64& rng, int dim) {
  Eigen::VectorXd v = gaussian_matrix(rng, dim, 1, 1.0).col(0);
  return v.normalized();
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

WorldSpec WorldSpec::generate(std::uint64_t rng_seed, int latent_dim) {
  if (latent_dim < kDirectionCount + 1) {
    throw Error(Errc::InvalidArgument, "latent_dim must exceed the number of attribute directions");
  }
  WorldSpec spec;
  spec.rng_seed = rng_seed;
  spec.latent_dim = latent_dim;
  auto rng = make_rng(rng_seed, kTagDirections);
  const Eigen::MatrixXd basis =
      orthonormal_columns(gaussian_matrix(rng, latent_dim, kDirectionCount, 1.0));
  for (int k = 0; k < kDirectionCount; ++k) {
    const Eigen::VectorXd col = basis.col(k);
    spec.directions[static_cast<std::size_t>(k)].assign(col.data(), col.data() + col.size());
  }
  return spec;
}

void WorldSpec::validate() const {
  if (latent_dim <= kDirectionCount || embed_dim < 4 || mesh_dim < 1) {
    throw Error(Errc::InvalidArgument, "world dimensions too small");
  }
  for (int a = 0; a < kDirectionCount; ++a) {
    const auto& u = directions[static_cast<std::size_t>(a)];
    if (static_cast<int>(u.size()) != latent_dim) {
      throw Error(Errc::Inconsistent, std::string("direction ") + kDirectionNames[a] +
                                          " does not match latent_dim");
    }
    for (int b = a; b < kDirectionCount; ++b) {
      const auto& v = directions[static_cast<std::size_t>(b)];
      double dot = 0.0;
      for (int i = 0; i < latent_dim; ++i) dot += u[i] * v[i];
      const double expected = a == b ? 1.0 : 0.0;
      if (std::abs(dot - expected) > 1e-9) {
        throw Error(Errc::Inconsistent, std::string("directions ") + kDirectionNames[a] + "/" +
                                            kDirectionNames[b] + " are not orthonormal");
      }
    }
  }
  if (bias_injection && !(bias_injection->severity >= 0.0)) {
    throw Error(Errc::OutOfRange, "bias severity must be >= 0");
  }
  if (!(annotator_noise >= 0.0) || !(annotator_bias_sd >= 0.0) || !(identity_drift >= 0.0)) {
    throw Error(Errc::OutOfRange, "annotator noise, worker bias spread and drift must be >= 0");
  }
  if (!(distance_scale > 0.0)) throw Error(Errc::OutOfRange, "distance_scale must be > 0");
}

std::string WorldSpec::space_id() const {
  return "standin:" + std::to_string(rng_seed) + ":" + std::to_string(latent_dim);
}

void to_json(Json& j, const BiasInjection& b) {
  j = Json{{"group", b.group.code()}, {"severity", b.severity}};
}

void from_json(const Json& j, BiasInjection& b) {
  b.group = group_from_code(j.at("group").get<std::string>());
  j.at("severity").get_to(b.severity);
}

void to_json(Json& j, const WorldSpec& w) {
  Json dirs = Json::object();
  for (int k = 0; k < kDirectionCount; ++k) dirs[kDirectionNames[k]] = w.directions[static_cast<std::size_t>(k)];
  j = Json{{"latent_dim", w.latent_dim},
           {"rng_seed", w.rng_seed},
           {"embed_dim", w.embed_dim},
           {"mesh_dim", w.mesh_dim},
           {"directions", dirs},
           {"bias_injection", w.bias_injection ? Json(*w.bias_injection) : Json(nullptr)},
           {"annotator_noise", w.annotator_noise},
           {"annotator_bias_sd", w.annotator_bias_sd},
           {"identity_drift", w.identity_drift},
           {"demographic_gain", w.demographic_gain},
           {"attribute_gain", w.attribute_gain},
           {"pose_gain", w.pose_gain},
           {"light_gain", w.light_gain},
           {"distance_scale", w.distance_scale}};
}

void from_json(const Json& j, WorldSpec& w) {
  j.at("latent_dim").get_to(w.latent_dim);
  j.at("rng_seed").get_to(w.rng_seed);
  j.at("embed_dim").get_to(w.embed_dim);
  j.at("mesh_dim").get_to(w.mesh_dim);
  const Json& dirs = j.at("directions");
  for (int k = 0; k < kDirectionCount; ++k) {
    dirs.at(kDirectionNames[k]).get_to(w.directions[static_cast<std::size_t>(k)]);
  }
  if (auto it = j.find("bias_injection"); it != j.end() && !it->is_null()) {
    w.bias_injection = it->get<BiasInjection>();
  } else {
    w.bias_injection.reset();
  }
  j.at("annotator_noise").get_to(w.annotator_noise);
  j.at("annotator_bias_sd").get_to(w.annotator_bias_sd);
  j.at("identity_drift").get_to(w.identity_drift);
  j.at("demographic_gain").get_to(w.demographic_gain);
  j.at("attribute_gain").get_to(w.attribute_gain);
  j.at("pose_gain").get_to(w.pose_gain);
  j.at("light_gain").get_to(w.light_gain);
  j.at("distance_scale").get_to(w.distance_scale);
}

DemographicGroup AttributeScores::group() const {
  return {gender >= 0.5 ? Gender::Male : Gender::Female, race};
}

World::World(WorldSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      space_id_(spec_.space_id()),
      default_embedder_(*this, EmbedderSpec{}) {
  for (int k = 0; k < kDirectionCount; ++k) {
    const auto& u = spec_.directions[static_cast<std::size_t>(k)];
    directions_[static_cast<std::size_t>(k)] = Eigen::Map<const Eigen::VectorXd>(u.data(), dim());
  }
  // Race class axes in the (race1, race2) plane, 120 degrees apart.
  const double pi = std::numbers::pi;
  const std::array<double, 3> angles = {pi / 2.0, pi / 2.0 + 2.0 * pi / 3.0, pi / 2.0 + 4.0 * pi / 3.0};
  for (std::size_t r = 0; r < 3; ++r) race_axes_[r] = {std::cos(angles[r]), std::sin(angles[r])};

  auto rng = make_rng(spec_.rng_seed, kTagMesh);
  mesh_map_ = gaussian_matrix(rng, spec_.mesh_dim, dim(), 1.0 / std::sqrt(static_cast<double>(dim())));
  mesh_attr_map_ = gaussian_matrix(rng, spec_.mesh_dim, 5, 0.1 / std::sqrt(static_cast<double>(spec_.mesh_dim)));
  mesh_mean_ = gaussian_matrix(rng, spec_.mesh_dim, 1, 1.0).col(0);
  mesh_pose_ = gaussian_matrix(rng, spec_.mesh_dim, 1, 0.05 / std::sqrt(static_cast<double>(spec_.mesh_dim))).col(0);
}

void World::check(const LatentCode& z) const {
  if (static_cast<int>(z.dim()) != dim()) {
    throw Error(Errc::Inconsistent, "latent of dimension " + std::to_string(z.dim()) +
                                        " does not belong to a " + std::to_string(dim()) + "-d world");
  }
}

Eigen::Map<const Eigen::VectorXd> World::view(const LatentCode& z) const {
  check(z);
  return {z.values.data(), dim()};
}

std::vector<LatentCode> World::sample_latents(int count, std::uint64_t stream) const {
  if (count < 1) throw Error(Errc::InvalidArgument, "sample count must be >= 1");
  auto rng = make_rng(spec_.rng_seed, kTagSampling, stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LatentCode> out(static_cast<std::size_t>(count));
  for (auto& z : out) {
    z.space_id = space_id_;
    z.values.resize(static_cast<std::size_t>(dim()));
    for (double& v : z.values) v = normal(rng);
  }
  return out;
}

AttributeScores World::true_attributes(const LatentCode& z) const {
  const auto x = view(z);
  auto proj = [&](Direction d) { return direction(d).dot(x); };
  AttributeScores s;
  s.gender = sigmoid(proj(Direction::Gender));
  const Eigen::Vector2d plane(proj(Direction::Race1), proj(Direction::Race2));
  for (std::size_t r = 0; r < 3; ++r) s.race_scores[r] = race_axes_[r].dot(plane);
  std::size_t best = 0;
  for (std::size_t r = 1; r < 3; ++r) {
    if (s.race_scores[r] > s.race_scores[best]) best = r;
  }
  s.race = static_cast<Race>(best);
  s.age = sigmoid(proj(Direction::Age));
  s.expression = sigmoid(proj(Direction::Expression));
  s.skin_tone = sigmoid(2.0 * s.race_scores[static_cast<std::size_t>(Race::Black)]);
  // Unrealistic when far out along the realism axis, and increasingly so for
  // faces pushed far along the attribute axes.
  double attr_energy = 0.0;
  for (Direction d : {Direction::Gender, Direction::Race1, Direction::Race2, Direction::Age,
                      Direction::Expression}) {
    attr_energy += proj(d) * proj(d);
  }
  s.uncanniness = sigmoid(1.5 * proj(Direction::Realism) + 0.15 * (attr_energy - 5.0) - 2.5);
  return s;
}

double World::true_score(const FaceRecord& face, Attribute attribute) const {
  const AttributeScores s = true_attributes(face.latent);
  switch (attribute) {
    case Attribute::Age: return s.age;
    case Attribute::Expression: return s.expression;
    case Attribute::Gender: return s.gender;
    case Attribute::SkinTone: return s.skin_tone;
    case Attribute::Uncanniness: return s.uncanniness;
    default: break;
  }
  throw Error(Errc::InvalidArgument,
              "no single-image oracle for attribute " + std::string(to_string(attribute)));
}

std::vector<double> World::identity_component(const LatentCode& z) const {
  Eigen::VectorXd x = view(z);
  for (const auto& u : directions_) x -= u.dot(x) * u;
  return {x.data(), x.data() + x.size()};
}

EmbeddingVector World::embed(const FaceRecord& face) const { return default_embedder_.embed(face); }

MeshFeature World::mesh_features(const FaceRecord& face) const {
  const auto x = view(face.latent);
  const std::vector<double> id = identity_component(face.latent);
  const Eigen::Map<const Eigen::VectorXd> idv(id.data(), dim());
  Eigen::VectorXd attr(5);
  attr << direction(Direction::Gender).dot(x), direction(Direction::Race1).dot(x),
      direction(Direction::Race2).dot(x), direction(Direction::Age).dot(x),
      direction(Direction::Expression).dot(x);
  const Eigen::VectorXd m =
      mesh_mean_ + mesh_map_ * idv + mesh_attr_map_ * attr + (face.pose_deg / 30.0) * mesh_pose_;
  return {face.face_id, {m.data(), m.data() + m.size()}};
}

double World::true_pair_distance(const FaceRecord& a, const FaceRecord& b) const {
  const std::vector<double> ia = identity_component(a.latent);
  const std::vector<double> ib = identity_component(b.latent);
  double id_sq = 0.0;
  for (std::size_t i = 0; i < ia.size(); ++i) id_sq += (ia[i] - ib[i]) * (ia[i] - ib[i]);

  const auto xa = view(a.latent);
  const auto xb = view(b.latent);
  const Eigen::VectorXd dz = xa - xb;
  double drift = std::abs(direction(Direction::Age).dot(dz)) +
                 std::abs(direction(Direction::Expression).dot(dz)) +
                 std::abs(a.pose_deg - b.pose_deg) / 30.0;
  if (a.light != b.light) drift += std::max(a.light_intensity, b.light_intensity);

  const double raw = std::sqrt(id_sq) + spec_.identity_drift * drift;
  return 1.0 - std::exp(-raw / spec_.distance_scale);
}

StandInEmbedder::StandInEmbedder(const World& world, EmbedderSpec spec)
    : world_(&world), spec_(std::move(spec)) {
  const WorldSpec& ws = world.spec_;
  if (spec_.bias_injection) {
    bias_ = spec_.bias_injection;
  } else if (spec_.inherit_world_bias) {
    bias_ = ws.bias_injection;
  }
  const int e = ws.embed_dim;
  auto rng = make_rng(ws.rng_seed, kTagEmbedder, spec_.seed);
  identity_map_ = gaussian_matrix(rng, e, ws.latent_dim, 1.0 / std::sqrt(static_cast<double>(ws.latent_dim)));
  demographic_map_ = orthonormal_columns(gaussian_matrix(rng, e, 3, 1.0));
  attribute_map_ = orthonormal_columns(gaussian_matrix(rng, e, 2, 1.0));
  for (auto& v : pose_dirs_) v = unit_gaussian(rng, e);
  for (auto& v : light_dirs_) v = unit_gaussian(rng, e);
  light_dirs_[static_cast<std::size_t>(Light::Neutral)].setZero();
}

Eigen::VectorXd StandInEmbedder::clean_embedding(const FaceRecord& face) const {
  const World& w = *world_;
  const WorldSpec& ws = w.spec_;
  const auto x = w.view(face.latent);
  const std::vector<double> id = w.identity_component(face.latent);
  const Eigen::Map<const Eigen::VectorXd> idv(id.data(), w.dim());

  Eigen::VectorXd h = (identity_map_ * idv).array().tanh().matrix();
  const double hn = h.norm();
  if (hn > 0.0) h /= hn;

  const Eigen::Vector3d demo(w.direction(Direction::Gender).dot(x), w.direction(Direction::Race1).dot(x),
                             w.direction(Direction::Race2).dot(x));
  const Eigen::Vector2d attr(w.direction(Direction::Age).dot(x), w.direction(Direction::Expression).dot(x));
  h += ws.demographic_gain * (demographic_map_ * demo);
  h += ws.attribute_gain * (attribute_map_ * attr);
  if (face.pose_deg != 0.0) {
    h += ws.pose_gain * (std::abs(face.pose_deg) / 30.0) * pose_dirs_[face.pose_deg > 0.0 ? 1 : 0];
  }
  if (face.light != Light::Neutral) {
    h += ws.light_gain * face.light_intensity * light_dirs_[static_cast<std::size_t>(face.light)];
  }
  const double n = h.norm();
  if (!(n > 0.0)) throw Error(Errc::Degenerate, "zero embedding for face " + face.face_id);
  return h / n;
}

EmbeddingVector StandInEmbedder::embed(const FaceRecord& face) const {
  Eigen::VectorXd v = clean_embedding(face);
  if (bias_ && bias_->severity > 0.0 && bias_->group == face.group) {
    auto rng = make_rng(world_->spec_.rng_seed, kTagBiasNoise,
                        Fnv1a{}.update(spec_.seed).separator().update(face.face_id).digest());
    const Eigen::VectorXd noise = unit_gaussian(rng, static_cast<int>(v.size()));
    v += bias_->severity * noise;  // v has unit norm here
    v.normalize();
  }
  return {face.face_id, {v.data(), v.data() + v.size()}, spec_.model_id};
}

}  // namespace biasbench
