#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "biasbench/analysis.hpp"
#include "biasbench/records_io.hpp"

namespace biasbench {

// 17 significant digits, the only decimal format written to artifacts.
std::string format_double(double v);

std::string curves_csv(std::span<const BiasCurve> curves);
std::string operating_points_csv(std::span<const BiasCurve> curves);
// model_id -> box statistics of that model's scored pairs.
std::string boxstats_csv(const std::map<std::string, std::vector<BoxStat>>& stats);

// FNMR against FMR for the six group curves of one (attribute, model), with a
// triangle at each operating point.
std::string render_svg(std::span<const BiasCurve> curves, Attribute attribute, const std::string& model_id);

// Per model, t_hcic and attribute: FNMR of every group at each fmr_grid point
// and the worst-case group per point.
Json summarize_curves(std::span<const BiasCurve> curves, std::span<const double> fmr_grid);

struct ReportInput {
  std::vector<BiasCurve> curves;  // all models and t_hcic values
  std::map<std::string, std::vector<BoxStat>> boxstats;
  double plot_t_hcic = 0.3;       // curves drawn in the SVGs
  std::vector<double> fmr_grid;
  Json extra = Json::object();    // merged into summary.json
};

// Writes curves.csv, operating_points.csv, boxstats.csv, one SVG per
// (attribute, model) and summary.json. Returns the paths written, sorted.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& out_dir, const ReportInput& input);

}  // namespace biasbench
