#include <doctest.h>

#include <algorithm>
#include <random>

#include "biasbench/report.hpp"
#include "support.hpp"

using namespace biasbench;

namespace {

std::vector<BiasCurve> fake_curves(const std::string& model, double t_hcic, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<BiasCurve> out;
  for (Attribute a : kNonProtected)
    for (const DemographicGroup& g : all_groups()) {
      BiasCurve c;
      c.model_id = model;
      c.attribute = a;
      c.group = g;
      c.t_hcic = t_hcic;
      for (int k = 0; k < 9; ++k) {
        const double t = -1.0 + 0.25 * k;
        c.points.push_back(CurvePoint{t, std::min(1.0, 0.1 * k * u(rng)), 1.0 - 0.1 * k, 0, 10, 0, 10});
      }
      c.operating = c.points[6];
      out.push_back(c);
    }
  return out;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("doubles are written with 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("curve csv has one row per stratum and threshold") {
  std::mt19937_64 rng(71);
  const auto c = fake_curves("m", 0.3, rng);
  const std::string csv = curves_csv(c);
  CHECK(csv.rfind("model,attribute,group,t_hcic,threshold,fnmr,fmr\n", 0) == 0);
  CHECK(lines(csv) == 1 + 24 * 9);
  CHECK(lines(operating_points_csv(c)) == 1 + 24);
}

TEST_CASE("svg draws six curves and six operating triangles") {
  std::mt19937_64 rng(72);
  const auto c = fake_curves("m", 0.3, rng);
  const std::string svg = render_svg(c, Attribute::Age, "m");
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count("<polyline") == 6);
  CHECK(count("<polygon") == 6);
}

TEST_CASE("summary lists worst-case groups per fmr point") {
  std::mt19937_64 rng(73);
  const auto c = fake_curves("m", 0.3, rng);
  const std::vector<double> grid = {0.1, 0.5};
  const Json s = summarize_curves(c, grid);
  CHECK(s.contains("m"));
  CHECK(s["m"].contains("0.3"));
}

TEST_CASE("report writes twelve plots for three models and is reproducible") {
  std::mt19937_64 rng(74);
  ReportInput in;
  for (std::string m : {"a", "b", "c"}) {
    for (double t : {0.2, 0.3}) {
      auto c = fake_curves(m, t, rng);
      in.curves.insert(in.curves.end(), c.begin(), c.end());
    }
    in.boxstats[m] = {BoxStat{Grouping::SameSeedSameGroup, Attribute::Pose, 0, 3, 0.9, 0.8, 0.95}};
  }
  in.fmr_grid = {0.1, 0.5};
  biasbench::testing::TempDir dir("report");
  const auto files = emit_report(dir.path() / "r1", in);
  const auto svgs = std::count_if(files.begin(), files.end(), [](const auto& p) { return p.extension() == ".svg"; });
  CHECK(svgs == 12);
  CHECK(std::is_sorted(files.begin(), files.end()));
  emit_report(dir.path() / "r2", in);
  for (const auto& f : files) CHECK(read_text(dir.path() / "r1" / f.filename()) == read_text(dir.path() / "r2" / f.filename()));
  CHECK(lines(read_text(dir.path() / "r1" / "curves.csv")) == 1 + 3 * 2 * 24 * 9);
}
