#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "biasbench/analysis.hpp"
#include "biasbench/annotation.hpp"
#include "biasbench/curation.hpp"
#include "biasbench/pipeline.hpp"

namespace py = pybind11;
using namespace biasbench;

namespace {

// Configs cross the boundary as JSON text; the Python side wraps json.dumps.
PipelineConfig config_from_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(Errc::Parse, std::string("config: ") + e.what());
  }
  PipelineConfig c = config_from_json(j);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_biasbench, m) {
  m.doc() = "biasbench core bindings";

  static py::exception<Error> error_type(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(std::string(to_string(e.code())) + ": " + e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "compute_hcic",
      [](const std::vector<int>& scores, bool allow_fallback) {
        const HcicRecord h = compute_hcic("item", scores, HcicOptions{.allow_fallback = allow_fallback});
        return py::dict(py::arg("hcic") = h.hcic, py::arg("dispersion") = h.dispersion,
                        py::arg("n_scores") = h.n_scores, py::arg("trimmed_fallback") = h.trimmed_fallback);
      },
      py::arg("scores"), py::arg("allow_fallback") = false);

  m.def("rebin_attribute", &rebin_attribute, py::arg("score"));

  m.def(
      "cosine_similarity",
      [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_similarity(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "fnmr_fmr",
      [](const std::vector<double>& cosines, const std::vector<bool>& positive, const std::vector<double>& thresholds) {
        if (cosines.size() != positive.size()) throw Error(Errc::InvalidArgument, "cosines and labels differ in length");
        std::vector<ScoredPair> s(cosines.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
          s[i].pair_id = std::to_string(i);
          s[i].cosine = cosines[i];
          s[i].label = positive[i] ? PairKind::Positive : PairKind::Negative;
        }
        py::list out;
        for (const CurvePoint& p : fnmr_fmr(s, thresholds))
          out.append(py::dict(py::arg("threshold") = p.threshold, py::arg("fnmr") = p.fnmr, py::arg("fmr") = p.fmr));
        return out;
      },
      py::arg("cosines"), py::arg("positive"), py::arg("thresholds"));

  m.def(
      "maxmin_filter",
      [](const std::vector<SeedId>& base, const MeshTable& mesh, std::size_t n, std::optional<SeedId> initial) {
        SeedPool pool;
        pool.base = base;
        const SeedPool r = maxmin_filter(pool, mesh, n, initial);
        return py::make_tuple(r.filtered, r.selection_distances);
      },
      py::arg("base"), py::arg("mesh"), py::arg("n"), py::arg("initial") = py::none());

  m.def(
      "default_config", [] { return config_to_json(PipelineConfig{}).dump(); },
      "Default pipeline config as JSON text.");

  m.def(
      "normalize_config", [](const std::string& text) { return config_to_json(config_from_text(text)).dump(); },
      py::arg("config_json"), "Validates a config and returns it with every default filled in.");

  m.def(
      "run_pipeline",
      [](const std::string& text, const std::string& stages) {
        const PipelineConfig c = config_from_text(text);
        std::vector<StageOutcome> outcomes;
        {
          py::gil_scoped_release release;
          outcomes = Pipeline(c).run(parse_stage_list(stages));
        }
        py::list out;
        for (const StageOutcome& o : outcomes) {
          std::vector<std::string> files;
          for (const auto& p : o.outputs) files.push_back(p.generic_string());
          out.append(py::dict(py::arg("stage") = std::string(to_string(o.stage)), py::arg("cached") = o.cached,
                              py::arg("outputs") = files));
        }
        return out;
      },
      py::arg("config_json"), py::arg("stages") = "all");

  py::class_<World>(m, "World")
      .def(py::init([](std::uint64_t seed, int latent_dim) { return std::make_unique<World>(WorldSpec::generate(seed, latent_dim)); }),
           py::arg("seed"), py::arg("latent_dim") = 32)
      .def_property_readonly("dim", &World::dim)
      .def_property_readonly("space_id", &World::space_id)
      .def(
          "sample_latents",
          [](const World& w, int count, std::uint64_t stream) {
            std::vector<std::vector<double>> out;
            for (LatentCode& z : w.sample_latents(count, stream)) out.push_back(std::move(z.values));
            return out;
          },
          py::arg("count"), py::arg("stream") = 0)
      .def(
          "identity_component",
          [](const World& w, const std::vector<double>& z) {
            return w.identity_component(LatentCode{z, w.space_id()});
          },
          py::arg("z"))
      .def(
          "attributes",
          [](const World& w, const std::vector<double>& z) {
            const AttributeScores s = w.true_attributes(LatentCode{z, w.space_id()});
            return py::dict(py::arg("gender") = s.gender, py::arg("race") = std::string(to_string(s.race)),
                            py::arg("age") = s.age, py::arg("expression") = s.expression,
                            py::arg("skin_tone") = s.skin_tone, py::arg("uncanniness") = s.uncanniness,
                            py::arg("group") = s.group().code());
          },
          py::arg("z"));
}
