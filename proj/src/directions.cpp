#include "biasbench/directions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "biasbench/world.hpp"

namespace biasbench {

namespace {

constexpr std::array<const char*, 2> kModelKindNames = {"LinearSVM", "LinearRegressor"};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_rectangular(const std::vector<std::vector<double>>& x, std::size_t rows) {
  if (x.empty()) throw Error(Errc::InvalidArgument, "empty training set");
  if (x.size() != rows) throw Error(Errc::InvalidArgument, "feature/label count mismatch");
  const std::size_t d = x.front().size();
  if (d == 0) throw Error(Errc::InvalidArgument, "zero-dimensional features");
  for (const auto& row : x) {
    if (row.size() != d) throw Error(Errc::Inconsistent, "ragged feature matrix");
  }
}

std::vector<std::vector<double>> latents_of(const TrainingSet& train) {
  std::vector<std::vector<double>> x;
  x.reserve(train.size());
  for (const auto& e : train.entries) x.push_back(e.latent.values);
  return x;
}

}  // namespace

void TrainingSet::validate() const {
  if (entries.empty()) throw Error(Errc::InvalidArgument, "empty training set");
  const std::size_t d = dim();
  for (const auto& e : entries) {
    if (e.latent.dim() != d) throw Error(Errc::Inconsistent, "training latents differ in dimension");
    if (e.labels.gender < 0 || e.labels.gender > 1 || e.labels.race < 0 || e.labels.race > 2) {
      throw Error(Errc::OutOfRange, "training label out of range");
    }
  }
}

TrainingSet label_with_oracle(const World& world, std::vector<LatentCode> latents) {
  TrainingSet set;
  set.entries.reserve(latents.size());
  for (auto& z : latents) {
    const AttributeScores s = world.true_attributes(z);
    TrainingEntry e;
    e.labels.gender = s.gender >= 0.5 ? 1 : 0;
    e.labels.race = static_cast<int>(s.race);
    e.labels.age = s.age;
    e.labels.expression = s.expression;
    e.latent = std::move(z);
    set.entries.push_back(std::move(e));
  }
  return set;
}

void to_json(Json& j, const TrainingEntry& e) {
  j = Json{{"latent", e.latent},
           {"labels", Json{{"gender", e.labels.gender},
                           {"race", e.labels.race},
                           {"age", e.labels.age},
                           {"expression", e.labels.expression}}},
           {"image_ref", e.image_ref ? Json(*e.image_ref) : Json(nullptr)}};
}

void from_json(const Json& j, TrainingEntry& e) {
  j.at("latent").get_to(e.latent);
  const Json& l = j.at("labels");
  l.at("gender").get_to(e.labels.gender);
  l.at("race").get_to(e.labels.race);
  l.at("age").get_to(e.labels.age);
  l.at("expression").get_to(e.labels.expression);
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    e.image_ref = it->get<std::string>();
  } else {
    e.image_ref.reset();
  }
}

double DirectionModel::score(std::span<const double> z) const {
  if (z.size() != weight.size()) {
    throw Error(Errc::Inconsistent, "latent dimension does not match the direction model");
  }
  return dot(weight, z) + bias;
}

double DirectionModel::weight_norm() const { return std::sqrt(dot(weight, weight)); }

std::vector<double> DirectionModel::unit_normal() const {
  const double n = weight_norm();
  if (!(n > 0.0)) throw Error(Errc::Degenerate, "direction model has a zero weight vector");
  std::vector<double> u(weight);
  for (double& v : u) v /= n;
  return u;
}

void to_json(Json& j, const DirectionModel& m) {
  j = Json{{"kind", kModelKindNames[static_cast<std::size_t>(m.kind)]},
           {"attribute", to_string(m.attribute)},
           {"positive_class", m.positive_class ? Json(*m.positive_class) : Json(nullptr)},
           {"weight", m.weight},
           {"bias", m.bias},
           {"diagnostic", m.diagnostic},
           {"iterations", m.iterations},
           {"converged", m.converged}};
}

void from_json(const Json& j, DirectionModel& m) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == kModelKindNames[0]) {
    m.kind = ModelKind::LinearSVM;
  } else if (kind == kModelKindNames[1]) {
    m.kind = ModelKind::LinearRegressor;
  } else {
    throw Error(Errc::Parse, "unknown model kind " + kind);
  }
  m.attribute = parse_attribute(j.at("attribute").get<std::string>());
  if (auto it = j.find("positive_class"); it != j.end() && !it->is_null()) {
    m.positive_class = it->get<int>();
  } else {
    m.positive_class.reset();
  }
  j.at("weight").get_to(m.weight);
  j.at("bias").get_to(m.bias);
  j.at("diagnostic").get_to(m.diagnostic);
  m.iterations = j.value("iterations", 0);
  m.converged = j.value("converged", true);
}

DirectionModel fit_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       const SvmOptions& options) {
  check_rectangular(x, y.size());
  if (!(options.regularization > 0.0)) {
    throw Error(Errc::InvalidArgument, "SVM regularization must be > 0");
  }
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  bool has_pos = false;
  bool has_neg = false;
  for (int label : y) {
    if (label != 1 && label != -1) throw Error(Errc::InvalidArgument, "SVM labels must be +1/-1");
    (label > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error(Errc::Degenerate, "SVM training data has a single class");

  // Box constraint of the dual for the mean-hinge primal.
  const double upper = 1.0 / (options.regularization * static_cast<double>(n));
  std::vector<double> w(d + 1, 0.0);  // last entry is the bias
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qdiag(n);
  for (std::size_t i = 0; i < n; ++i) qdiag[i] = dot(x[i], x[i]) + 1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix64(options.shuffle_seed));

  DirectionModel model;
  model.converged = false;
  int epoch = 0;
  for (; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const auto& xi = x[i];
      const double yi = y[i];
      const double g = yi * (dot(std::span<const double>(w.data(), d), xi) + w[d]) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= upper) {
        pg = std::max(g, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qdiag[i], 0.0, upper);
        const double step = (alpha[i] - old) * yi;
        if (step != 0.0) {
          for (std::size_t k = 0; k < d; ++k) w[k] += step * xi[k];
          w[d] += step;
        }
      }
    }
    if (pg_max - pg_min < options.tolerance) {
      model.converged = true;
      ++epoch;
      break;
    }
  }
  if (!model.converged) {
    throw Error(Errc::NotConverged, "SVM did not converge within " + std::to_string(options.max_epochs) +
                                        " epochs");
  }

  model.kind = ModelKind::LinearSVM;
  model.weight.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = w[d];
  model.iterations = epoch;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = model.score(x[i]);
    if ((s > 0.0) == (y[i] > 0)) ++correct;
  }
  model.diagnostic = static_cast<double>(correct) / static_cast<double>(n);
  if (!(model.weight_norm() > 0.0)) throw Error(Errc::Degenerate, "SVM produced a zero normal");
  return model;
}

DirectionModel fit_svm(const TrainingSet& train, Attribute attribute, int positive_class,
                       const SvmOptions& options) {
  train.validate();
  std::vector<int> y;
  y.reserve(train.size());
  for (const auto& e : train.entries) {
    int label = 0;
    if (attribute == Attribute::Gender) {
      label = e.labels.gender;
    } else if (attribute == Attribute::Race) {
      label = e.labels.race;
    } else {
      throw Error(Errc::InvalidArgument, "SVM directions are fitted for Gender or Race only");
    }
    y.push_back(label == positive_class ? 1 : -1);
  }
  DirectionModel m = fit_svm(latents_of(train), y, options);
  m.attribute = attribute;
  m.positive_class = positive_class;
  return m;
}

DirectionModel fit_regressor(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                             const RegressorOptions& options) {
  check_rectangular(x, y.size());
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  if (n < d + 1) {
    throw Error(Errc::InvalidArgument, "regressor needs at least d+1 samples");
  }
  if (!(options.ridge >= 0.0)) throw Error(Errc::InvalidArgument, "ridge must be >= 0");

  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dd + 1, dd + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dd + 1);
  Eigen::VectorXd row(dd + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) row[static_cast<Eigen::Index>(k)] = x[i][k];
    row[dd] = 1.0;
    gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
    rhs += y[i] * row;
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  for (Eigen::Index k = 0; k < dd; ++k) gram(k, k) += options.ridge;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(Errc::Degenerate, "regressor design is rank deficient");
  }
  const Eigen::VectorXd beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw Error(Errc::Degenerate, "regressor design is rank deficient");
  // Without ridge a singular Gram matrix can still factor; check the residual.
  if (options.ridge == 0.0 && (gram * beta - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm())) {
    throw Error(Errc::Degenerate, "regressor design is rank deficient");
  }

  DirectionModel m;
  m.kind = ModelKind::LinearRegressor;
  m.weight.assign(beta.data(), beta.data() + dd);
  m.bias = beta[dd];

  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - m.score(x[i]);
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0 || !(m.weight_norm() > 1e-12)) {
    throw Error(Errc::Degenerate, "labels carry no linear signal; direction is zero");
  }
  m.diagnostic = 1.0 - ss_res / ss_tot;
  return m;
}

DirectionModel fit_regressor(const TrainingSet& train, Attribute attribute, const RegressorOptions& options) {
  train.validate();
  if (attribute != Attribute::Age && attribute != Attribute::Expression) {
    throw Error(Errc::InvalidArgument, "regressors are fitted for Age or Expression only");
  }
  std::vector<double> y;
  y.reserve(train.size());
  for (const auto& e : train.entries) {
    y.push_back(attribute == Attribute::Age ? e.labels.age : e.labels.expression);
  }
  DirectionModel m = fit_regressor(latents_of(train), y, options);
  m.attribute = attribute;
  return m;
}

void to_json(Json& j, const DirectionSet& s) {
  j = Json{{"gender", s.gender},
           {"race", Json::array({s.race[0], s.race[1], s.race[2]})},
           {"age", s.age},
           {"expression", s.expression}};
}

void from_json(const Json& j, DirectionSet& s) {
  j.at("gender").get_to(s.gender);
  const Json& race = j.at("race");
  if (!race.is_array() || race.size() != 3) throw Error(Errc::Parse, "directions.json needs 3 race models");
  for (std::size_t r = 0; r < 3; ++r) race.at(r).get_to(s.race[r]);
  j.at("age").get_to(s.age);
  j.at("expression").get_to(s.expression);
}

DirectionSet fit_direction_set(const TrainingSet& train, const SvmOptions& svm,
                               const RegressorOptions& regressor) {
  DirectionSet s;
  s.gender = fit_svm(train, Attribute::Gender, 1, svm);
  for (int r = 0; r < 3; ++r) {
    SvmOptions opts = svm;
    opts.shuffle_seed = svm.shuffle_seed + static_cast<std::uint64_t>(r) + 1;
    s.race[static_cast<std::size_t>(r)] = fit_svm(train, Attribute::Race, r, opts);
  }
  s.age = fit_regressor(train, Attribute::Age, regressor);
  s.expression = fit_regressor(train, Attribute::Expression, regressor);
  return s;
}

namespace {

// Moves z along the model normal until sign * score >= margin. Linear models
// admit the exact displacement (sign * margin - score) / |w|.
void displace_to_margin(std::vector<double>& z, const DirectionModel& model, double sign,
                        const PrototypeOptions& options) {
  const double s = model.score(z);
  if (sign * s >= options.margin_target) return;
  const double norm = model.weight_norm();
  if (!(norm > 0.0)) throw Error(Errc::Degenerate, "direction model has a zero weight vector");
  const double delta = (sign * options.margin_target - s) / norm;
  if (std::abs(delta) > options.max_distance) {
    throw Error(Errc::Unreachable, "prototype target lies " + std::to_string(std::abs(delta)) +
                                       " beyond the seed, over the cap");
  }
  for (std::size_t k = 0; k < z.size(); ++k) z[k] += delta * model.weight[k] / norm;
}

}  // namespace

std::array<FaceRecord, kGroupCount> make_prototypes(SeedId seed, const LatentCode& seed_latent,
                                                    const DirectionModel& gender_model,
                                                    const std::array<DirectionModel, 3>& race_models,
                                                    const PrototypeOptions& options) {
  if (gender_model.weight.size() != seed_latent.dim()) {
    throw Error(Errc::Inconsistent, "gender model and seed live in different latent spaces");
  }
  for (const auto& m : race_models) {
    if (m.weight.size() != seed_latent.dim()) {
      throw Error(Errc::Inconsistent, "race model and seed live in different latent spaces");
    }
  }
  std::array<FaceRecord, kGroupCount> out;
  const auto& groups = all_groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const DemographicGroup group = groups[g];
    // Gender SVM treats Male as the positive class.
    const double gender_sign = group.gender == Gender::Male ? 1.0 : -1.0;
    const DirectionModel& race_model = race_models[static_cast<std::size_t>(group.race)];
    std::vector<double> z = seed_latent.values;
    if (options.gender_first) {
      displace_to_margin(z, gender_model, gender_sign, options);
      displace_to_margin(z, race_model, 1.0, options);
    } else {
      displace_to_margin(z, race_model, 1.0, options);
      displace_to_margin(z, gender_model, gender_sign, options);
    }
    FaceRecord& r = out[g];
    r.seed_id = seed;
    r.group = group;
    r.variant = Variant::prototype();
    r.face_id = make_face_id(seed, group, r.variant);
    r.latent = LatentCode{std::move(z), seed_latent.space_id};
  }
  return out;
}

void TraversalSpec::validate() const {
  if (!(target > 0.0 && target < 1.0)) throw Error(Errc::OutOfRange, "traversal target must lie in (0,1)");
  if (steps < 1) throw Error(Errc::InvalidArgument, "traversal needs n >= 1 steps");
  if (!(max_distance > 0.0) || !(search_step > 0.0) || !(tolerance > 0.0)) {
    throw Error(Errc::InvalidArgument, "traversal distances must be positive");
  }
}

TraversalSpec age_traversal() { return TraversalSpec{.target = 0.8}; }
TraversalSpec expression_traversal() { return TraversalSpec{.target = 0.9}; }

TraversalDistance find_traversal_distance(const LatentCode& z, const DirectionModel& model,
                                          const TraversalSpec& spec) {
  spec.validate();
  const std::vector<double> u = model.unit_normal();
  std::vector<double> probe(z.values);
  auto output_at = [&](double t) {
    for (std::size_t k = 0; k < probe.size(); ++k) probe[k] = z.values[k] + t * u[k];
    return model.score(probe);
  };

  if (output_at(0.0) >= spec.target) return {0.0, false};
  double lo = 0.0;
  double hi = 0.0;
  for (;;) {
    hi = std::min(lo + spec.search_step, spec.max_distance);
    if (output_at(hi) >= spec.target) break;
    if (hi >= spec.max_distance) return {spec.max_distance, true};
    lo = hi;
  }
  // Invariant: output(lo) < target <= output(hi).
  while (hi - lo > spec.tolerance * 0.1) {
    const double mid = 0.5 * (lo + hi);
    if (output_at(mid) >= spec.target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, false};
}

SequenceResult make_attribute_sequence(const FaceRecord& prototype, const DirectionModel& model,
                                       const TraversalSpec& spec) {
  if (model.attribute != Attribute::Age && model.attribute != Attribute::Expression) {
    throw Error(Errc::InvalidArgument, "attribute sequences are built for Age or Expression only");
  }
  if (!prototype.variant.is_prototype()) {
    throw Error(Errc::InvalidArgument, "sequences start from a prototype");
  }
  const TraversalDistance td = find_traversal_distance(prototype.latent, model, spec);
  const std::vector<double> u = model.unit_normal();

  SequenceResult result;
  result.distance = td.distance;
  result.truncated = td.truncated;
  result.degenerate = td.distance == 0.0;
  const int n = spec.steps;
  for (int k = -n; k <= n; ++k) {
    if (k == 0) {
      result.faces.push_back(prototype);
      continue;
    }
    const int index = k + n;
    const double offset = static_cast<double>(k) * (td.distance / n);
    FaceRecord r = prototype;
    r.variant = Variant::slot(model.attribute, index);
    r.face_id = make_face_id(r.seed_id, r.group, r.variant);
    for (std::size_t i = 0; i < u.size(); ++i) r.latent.values[i] += offset * u[i];
    r.image_ref.reset();
    result.faces.push_back(std::move(r));
  }
  return result;
}

std::array<FaceRecord, kSequenceLength> make_pose_sequence(const FaceRecord& prototype) {
  if (!prototype.variant.is_prototype() || prototype.pose_deg != 0.0 || prototype.light != Light::Neutral) {
    throw Error(Errc::InvalidArgument, "pose sequences start from a neutral prototype");
  }
  std::array<FaceRecord, kSequenceLength> out;
  for (int i = 0; i < kSequenceLength; ++i) {
    if (i == neutral_index(Attribute::Pose)) {
      out[static_cast<std::size_t>(i)] = prototype;
      continue;
    }
    FaceRecord r = prototype;
    r.variant = Variant::slot(Attribute::Pose, i);
    r.face_id = make_face_id(r.seed_id, r.group, r.variant);
    r.pose_deg = kPoseAnglesDeg[static_cast<std::size_t>(i)];
    r.image_ref.reset();
    out[static_cast<std::size_t>(i)] = std::move(r);
  }
  return out;
}

std::array<FaceRecord, kSequenceLength> make_lighting_sequence(const FaceRecord& prototype) {
  if (!prototype.variant.is_prototype() || prototype.pose_deg != 0.0 || prototype.light != Light::Neutral) {
    throw Error(Errc::InvalidArgument, "lighting sequences start from a neutral prototype");
  }
  std::array<FaceRecord, kSequenceLength> out;
  for (int i = 0; i < kSequenceLength; ++i) {
    if (i == neutral_index(Attribute::Lighting)) {
      out[static_cast<std::size_t>(i)] = prototype;
      continue;
    }
    FaceRecord r = prototype;
    r.variant = Variant::slot(Attribute::Lighting, i);
    r.face_id = make_face_id(r.seed_id, r.group, r.variant);
    r.light = kLightingSequence[static_cast<std::size_t>(i)];
    r.light_intensity = kLightIntensity;
    r.image_ref.reset();
    out[static_cast<std::size_t>(i)] = std::move(r);
  }
  return out;
}

}  // namespace biasbench
