#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "biasbench/directions.hpp"
#include "biasbench/world.hpp"

using namespace biasbench;

namespace {

DirectionModel linear(std::vector<double> w, double b, Attribute a = Attribute::Age) {
  DirectionModel m;
  m.kind = ModelKind::LinearRegressor;
  m.attribute = a;
  m.weight = std::move(w);
  m.bias = b;
  return m;
}

DirectionModel axis_svm(std::size_t dim, std::size_t axis, Attribute a) {
  DirectionModel m;
  m.kind = ModelKind::LinearSVM;
  m.attribute = a;
  m.weight.assign(dim, 0.0);
  m.weight[axis] = 1.0;
  return m;
}

double cosine(const std::vector<double>& a, const Eigen::VectorXd& b) {
  double d = 0.0, na = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[static_cast<Eigen::Index>(i)];
    na += a[i] * a[i];
  }
  return d / std::sqrt(na) / b.norm();
}

FaceRecord proto_at(std::vector<double> z) {
  FaceRecord f;
  f.face_id = make_face_id(0, f.group, f.variant);
  f.latent = LatentCode{std::move(z), "toy"};
  return f;
}

}  // namespace

TEST_CASE("svm on an axis-separable toy set") {
  const DirectionModel m = fit_svm({{-1.0, 0.0}, {1.0, 0.0}}, {-1, 1}, SvmOptions{.regularization = 0.01});
  const auto u = m.unit_normal();
  CHECK(u[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(u[1]) < 1e-9);
  CHECK(m.diagnostic == 1.0);
  CHECK(m.converged);
}

TEST_CASE("svm rejects single-class input") {
  try {
    fit_svm({{0.0, 1.0}, {1.0, 0.0}}, {1, 1});
    FAIL("expected Degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Degenerate);
  }
}

TEST_CASE("svm separates random separable data") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 400; ++i) {
    std::vector<double> row = {n(rng), n(rng), n(rng)};
    const double s = row[0] + 2.0 * row[1] - 0.5;
    if (std::abs(s) < 0.3) continue;
    x.push_back(row);
    y.push_back(s > 0 ? 1 : -1);
  }
  const DirectionModel m = fit_svm(x, y, SvmOptions{.regularization = 1e-3});
  CHECK(m.diagnostic > 0.98);
  const auto u = m.unit_normal();
  CHECK((u[0] + 2.0 * u[1]) / std::sqrt(5.0) > 0.95);
}

TEST_CASE("regressor recovers exact linear labels") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    x.push_back({n(rng), n(rng), n(rng), n(rng)});
    y.push_back(2.0 * x.back()[0] + 1.0);
  }
  const DirectionModel m = fit_regressor(x, y);
  CHECK(m.weight[0] == doctest::Approx(2.0).epsilon(1e-6));
  for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(m.weight[k]) < 1e-6);
  CHECK(m.bias == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(m.diagnostic == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("regressor on constant labels is degenerate") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 50; ++i) x.push_back({n(rng), n(rng)});
  try {
    fit_regressor(x, std::vector<double>(50, 0.4));
    FAIL("expected Degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Degenerate);
  }
}

TEST_CASE("fitted directions align with the world at moderate N") {
  World w(WorldSpec::generate(31));
  const TrainingSet train = label_with_oracle(w, w.sample_latents(3000, 1));
  const DirectionSet s = fit_direction_set(train);
  CHECK(std::abs(cosine(s.gender.weight, w.direction(Direction::Gender))) > 0.9);
  CHECK(std::abs(cosine(s.age.weight, w.direction(Direction::Age))) > 0.9);
  CHECK(std::abs(cosine(s.expression.weight, w.direction(Direction::Expression))) > 0.9);
}

TEST_CASE("direction set round-trips through JSON") {
  World w(WorldSpec::generate(32));
  const DirectionSet s = fit_direction_set(label_with_oracle(w, w.sample_latents(800, 1)));
  const DirectionSet back = Json(s).get<DirectionSet>();
  CHECK(back.gender.weight == s.gender.weight);
  CHECK(back.race[2].bias == s.race[2].bias);
  CHECK(back.expression.kind == ModelKind::LinearRegressor);
}

TEST_CASE("prototypes already past the margin do not move") {
  const DirectionModel g = axis_svm(4, 0, Attribute::Gender);
  const std::array<DirectionModel, 3> r = {axis_svm(4, 1, Attribute::Race), axis_svm(4, 2, Attribute::Race),
                                           axis_svm(4, 3, Attribute::Race)};
  const LatentCode seed{{2.0, 2.0, 0.0, 0.0}, "toy"};
  const auto protos = make_prototypes(7, seed, g, r);
  CHECK(protos[0].latent.values == seed.values);  // WM
  // WF moves along gender only, by (-1 - 2) / 1.
  CHECK(protos[1].latent.values[0] == doctest::Approx(-1.0));
  CHECK(protos[1].latent.values[1] == 2.0);
  // BM moves along the Black normal only.
  CHECK(protos[2].latent.values[0] == 2.0);
  CHECK(protos[2].latent.values[2] == doctest::Approx(1.0));
}

TEST_CASE("prototype displacement equals the closed form") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    DirectionModel g;
    g.weight = {n(rng), n(rng), n(rng)};
    g.bias = n(rng);
    std::array<DirectionModel, 3> r;
    for (auto& m : r) {
      m.weight = {0.0, 0.0, 0.0};
      m.bias = 5.0;  // every race already satisfied
    }
    const LatentCode z{{n(rng), n(rng), n(rng)}, "toy"};
    const auto protos = make_prototypes(1, z, g, r, PrototypeOptions{.max_distance = 1e9});
    const double s = g.score(z.values);
    const double wn = g.weight_norm();
    for (const FaceRecord& p : protos) {
      const double sign = p.group.gender == Gender::Male ? 1.0 : -1.0;
      const double expected = sign * s >= 1.0 ? 0.0 : (sign - s) / wn;
      double moved = 0.0;
      for (std::size_t k = 0; k < 3; ++k) moved += (p.latent.values[k] - z.values[k]) * g.weight[k] / wn;
      CHECK(moved == doctest::Approx(expected).epsilon(1e-9));
      CHECK(sign * g.score(p.latent.values) >= 1.0 - 1e-9);
    }
  }
}

TEST_CASE("unreachable prototypes throw") {
  const DirectionModel g = axis_svm(2, 0, Attribute::Gender);
  const std::array<DirectionModel, 3> r = {axis_svm(2, 1, Attribute::Race), axis_svm(2, 1, Attribute::Race),
                                           axis_svm(2, 1, Attribute::Race)};
  try {
    make_prototypes(0, LatentCode{{50.0, 2.0}, "toy"}, g, r);
    FAIL("expected Unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Unreachable);
  }
}

TEST_CASE("every seed yields one prototype per group") {
  World w(WorldSpec::generate(34));
  const DirectionSet s = fit_direction_set(label_with_oracle(w, w.sample_latents(1500, 1)));
  std::array<int, kGroupCount> counts{};
  for (const LatentCode& z : w.sample_latents(30, 2)) {
    const auto protos = make_prototypes(0, z, s.gender, s.race);
    for (std::size_t g = 0; g < protos.size(); ++g) {
      CHECK(protos[g].group == all_groups()[g]);
      CHECK(protos[g].variant.is_prototype());
      ++counts[static_cast<std::size_t>(protos[g].group.index())];
    }
  }
  for (int c : counts) CHECK(c == 30);
}

TEST_CASE("linear traversal hits the documented offsets") {
  const DirectionModel m = linear({1.0, 0.0}, 0.0);
  const SequenceResult r = make_attribute_sequence(proto_at({0.3, 0.0}), m, TraversalSpec{.target = 0.8});
  CHECK(r.distance == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(r.degenerate);
  const std::array<double, 5> offsets = {-0.5, -0.25, 0.0, 0.25, 0.5};
  REQUIRE(r.faces.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(r.faces[i].latent.values[0] == doctest::Approx(0.3 + offsets[i]).epsilon(1e-6));
    CHECK(r.faces[i].latent.values[1] == 0.0);
  }
  CHECK(r.faces[2] == proto_at({0.3, 0.0}));
}

TEST_CASE("traversal from a face already at target is degenerate") {
  const DirectionModel m = linear({1.0, 0.0}, 0.0);
  const SequenceResult r = make_attribute_sequence(proto_at({0.9, 0.0}), m, TraversalSpec{.target = 0.8});
  CHECK(r.degenerate);
  CHECK(r.distance == 0.0);
  for (const FaceRecord& f : r.faces) CHECK(f.latent == r.faces[2].latent);
}

TEST_CASE("traversal sequences are symmetric with equal spacing") {
  std::mt19937_64 rng(35);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    const DirectionModel m = linear({n(rng), n(rng), n(rng)}, -1.0, trial % 2 ? Attribute::Age : Attribute::Expression);
    const FaceRecord p = proto_at({n(rng) * 0.2, n(rng) * 0.2, n(rng) * 0.2});
    const SequenceResult r = make_attribute_sequence(p, m, TraversalSpec{.target = 0.5, .max_distance = 100.0});
    const auto u = m.unit_normal();
    for (std::size_t i = 0; i < 5; ++i) {
      double off = 0.0;
      for (std::size_t k = 0; k < 3; ++k) off += (r.faces[i].latent.values[k] - p.latent.values[k]) * u[k];
      CHECK(off == doctest::Approx((static_cast<double>(i) - 2.0) * r.distance / 2.0).epsilon(1e-9));
      // Monotone along +w: score gain equals offset times |w|.
      CHECK(m.score(r.faces[i].latent.values) - m.score(p.latent.values) ==
            doctest::Approx(off * m.weight_norm()).epsilon(1e-9));
    }
    CHECK(r.faces[2] == p);
  }
}

TEST_CASE("traversal truncates at the distance cap") {
  const DirectionModel m = linear({1.0}, -100.0);
  const TraversalDistance d = find_traversal_distance(LatentCode{{0.0}, "toy"}, m, TraversalSpec{.target = 0.5});
  CHECK(d.truncated);
  CHECK(d.distance == 10.0);
}

TEST_CASE("pose and lighting sequences") {
  const FaceRecord p = proto_at({0.0, 1.0});
  const auto pose = make_pose_sequence(p);
  for (std::size_t i = 0; i < 5; ++i) CHECK(pose[i].pose_deg == kPoseAnglesDeg[i]);
  CHECK(pose[2] == p);
  CHECK(kPoseAnglesDeg == std::array<double, 5>{-30.0, -15.0, 0.0, 15.0, 30.0});
  const auto light = make_lighting_sequence(p);
  CHECK(light[0] == p);
  const std::array<Light, 5> order = {Light::Neutral, Light::Up, Light::Down, Light::Left, Light::Right};
  for (std::size_t i = 0; i < 5; ++i) CHECK(light[i].light == order[i]);
  for (std::size_t i = 1; i < 5; ++i) CHECK(light[i].light_intensity == 0.7);
  FaceRecord turned = p;
  turned.pose_deg = 15;
  CHECK_THROWS_AS(make_pose_sequence(turned), Error);
}
