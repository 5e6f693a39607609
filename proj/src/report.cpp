#include "biasbench/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace biasbench {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string curves_csv(std::span<const BiasCurve> curves) {
  std::string out = "model,attribute,group,t_hcic,threshold,fnmr,fmr\n";
  for (const BiasCurve& c : curves) {
    const std::string prefix = c.model_id + "," + std::string(to_string(c.attribute)) + "," + c.group.code() + "," +
                               format_double(c.t_hcic) + ",";
    for (const CurvePoint& p : c.points)
      out += prefix + format_double(p.threshold) + "," + format_double(p.fnmr) + "," + format_double(p.fmr) + "\n";
  }
  return out;
}

std::string operating_points_csv(std::span<const BiasCurve> curves) {
  std::string out =
      "model,attribute,group,t_hcic,threshold,fnmr,fmr,false_rejects,positives,false_accepts,negatives\n";
  for (const BiasCurve& c : curves) {
    const CurvePoint& p = c.operating;
    out += c.model_id + "," + std::string(to_string(c.attribute)) + "," + c.group.code() + "," +
           format_double(c.t_hcic) + "," + format_double(p.threshold) + "," + format_double(p.fnmr) + "," +
           format_double(p.fmr) + "," + std::to_string(p.false_rejects) + "," + std::to_string(p.positives) + "," +
           std::to_string(p.false_accepts) + "," + std::to_string(p.negatives) + "\n";
  }
  return out;
}

std::string boxstats_csv(const std::map<std::string, std::vector<BoxStat>>& stats) {
  std::string out = "model,grouping,attribute,bucket,count,median,p15,p85\n";
  for (const auto& [model, rows] : stats)
    for (const BoxStat& b : rows)
      out += model + "," + std::string(to_string(b.grouping)) + "," + std::string(to_string(b.attribute)) + "," +
             std::to_string(b.bucket) + "," + std::to_string(b.count) + "," + format_double(b.median) + "," +
             format_double(b.p15) + "," + format_double(b.p85) + "\n";
  return out;
}

namespace {

constexpr std::array<const char*, kGroupCount> kColors = {"#1f77b4", "#aec7e8", "#d62728",
                                                          "#ff9896", "#2ca02c", "#98df8a"};

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(std::span<const BiasCurve> curves, Attribute attribute, const std::string& model_id) {
  constexpr double W = 520, H = 420, L = 60, R = 110, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto X = [&](double fmr) { return L + fmr * pw; };
  auto Y = [&](double fnmr) { return T + (1.0 - fnmr) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(W) + "\" height=\"" + px(H) + "\" viewBox=\"0 0 " +
       px(W) + " " + px(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + px(L) + "\" y=\"20\" font-size=\"13\">" + std::string(to_string(attribute)) + " / " + model_id +
       "</text>\n";
  s += "<rect x=\"" + px(L) + "\" y=\"" + px(T) + "\" width=\"" + px(pw) + "\" height=\"" + px(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s += "<line x1=\"" + px(X(v)) + "\" y1=\"" + px(T + ph) + "\" x2=\"" + px(X(v)) + "\" y2=\"" + px(T + ph + 4) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + px(X(v)) + "\" y=\"" + px(T + ph + 16) + "\" text-anchor=\"middle\">" + px(v) + "</text>\n";
    s += "<line x1=\"" + px(L - 4) + "\" y1=\"" + px(Y(v)) + "\" x2=\"" + px(L) + "\" y2=\"" + px(Y(v)) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + px(L - 6) + "\" y=\"" + px(Y(v) + 4) + "\" text-anchor=\"end\">" + px(v) + "</text>\n";
  }
  s += "<text x=\"" + px(L + pw / 2) + "\" y=\"" + px(H - 10) + "\" text-anchor=\"middle\">FMR</text>\n";
  s += "<text x=\"15\" y=\"" + px(T + ph / 2) + "\" transform=\"rotate(-90 15 " + px(T + ph / 2) +
       ")\" text-anchor=\"middle\">FNMR</text>\n";

  int row = 0;
  for (const BiasCurve& c : curves) {
    if (c.attribute != attribute || c.model_id != model_id) continue;
    const char* color = kColors[static_cast<std::size_t>(c.group.index())];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      if (i) s += ' ';
      s += px(X(c.points[i].fmr)) + "," + px(Y(c.points[i].fnmr));
    }
    s += "\"/>\n";
    const double ox = X(c.operating.fmr), oy = Y(c.operating.fnmr);
    s += "<polygon fill=\"" + std::string(color) + "\" stroke=\"#5b2a86\" points=\"" + px(ox) + "," + px(oy - 6) +
         " " + px(ox - 5) + "," + px(oy + 4) + " " + px(ox + 5) + "," + px(oy + 4) + "\"/>\n";
    const double ly = T + 10 + 16 * row++;
    s += "<line x1=\"" + px(W - R + 10) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(W - R + 30) + "\" y2=\"" + px(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + px(W - R + 36) + "\" y=\"" + px(ly + 4) + "\">" + c.group.code() + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

Json summarize_curves(std::span<const BiasCurve> curves, std::span<const double> fmr_grid) {
  // model -> t_hcic (shortest round-trip text) -> attribute -> rows
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<const BiasCurve*>>>> tree;
  for (const BiasCurve& c : curves)
    tree[c.model_id][Json(c.t_hcic).dump()][std::string(to_string(c.attribute))].push_back(&c);

  Json out = Json::object();
  for (const auto& [model, by_t] : tree) {
    for (const auto& [t, by_attr] : by_t) {
      for (const auto& [attr, list] : by_attr) {
        Json entry;
        Json groups = Json::object();
        Json worst = Json::array();
        for (double f : fmr_grid) {
          double worst_v = -1.0;
          std::string worst_g;
          for (const BiasCurve* c : list) {
            const double v = fnmr_at_fmr(c->points, f);
            if (v > worst_v) {
              worst_v = v;
              worst_g = c->group.code();
            }
          }
          worst.push_back(Json{{"fmr", f}, {"group", worst_g}, {"fnmr", worst_v}});
        }
        for (const BiasCurve* c : list) {
          Json g = Json::array();
          for (double f : fmr_grid) g.push_back(Json{{"fmr", f}, {"fnmr", fnmr_at_fmr(c->points, f)}});
          groups[c->group.code()] = Json{{"fnmr_at_fmr", g},
                                         {"operating_point",
                                          {{"threshold", c->operating.threshold},
                                           {"fnmr", c->operating.fnmr},
                                           {"fmr", c->operating.fmr}}}};
        }
        entry["groups"] = std::move(groups);
        entry["worst_case"] = std::move(worst);
        out[model][t][attr] = std::move(entry);
      }
    }
  }
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::filesystem::path& out_dir, const ReportInput& input) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create report directory " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    write_text_atomic(path, content);
    written.push_back(path);
  };
  write("curves.csv", curves_csv(input.curves));
  write("operating_points.csv", operating_points_csv(input.curves));
  write("boxstats.csv", boxstats_csv(input.boxstats));

  std::set<std::string> models;
  for (const BiasCurve& c : input.curves) models.insert(c.model_id);
  std::vector<BiasCurve> plotted;
  for (const BiasCurve& c : input.curves)
    if (c.t_hcic == input.plot_t_hcic) plotted.push_back(c);
  for (const std::string& model : models)
    for (Attribute attr : kNonProtected)
      write("fnmr_fmr_" + std::string(to_string(attr)) + "_" + model + ".svg", render_svg(plotted, attr, model));

  Json summary = input.extra;
  summary["fmr_grid"] = input.fmr_grid;
  summary["plot_t_hcic"] = input.plot_t_hcic;
  summary["curves"] = summarize_curves(input.curves, input.fmr_grid);
  write("summary.json", summary.dump(2) + "\n");

  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace biasbench
