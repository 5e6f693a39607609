#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include "biasbench/hub_server.hpp"
#include "biasbench/pipeline.hpp"

using namespace biasbench;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct Common {
  std::string config;
  std::string out;
  int threads = 0;
  bool exclude_self_slots = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--out", c.out, "output root; overrides BIASBENCH_OUT and the config");
  cmd->add_option("--threads", c.threads, "worker threads per stage")->check(CLI::PositiveNumber);
  cmd->add_flag("--exclude-self-slots", c.exclude_self_slots, "leave prototype-vs-itself pairs out of the curves");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (const char* env = std::getenv("BIASBENCH_OUT"); env && *env) cfg.out = env;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.threads > 0) cfg.threads = c.threads;
  if (c.exclude_self_slots) cfg.analyze.analyzer.exclude_self_slots = true;
  cfg.validate();
  return cfg;
}

// Serves the hub until interrupted, or until every item is complete when
// `until_complete` is set.
void serve_hub(AnnotationHub& hub, const PipelineConfig& cfg, bool until_complete) {
  const auto pairs = read_jsonl<PairRecord>(cfg.out / "pairs.jsonl");
  const auto faces = read_jsonl<FaceRecord>(cfg.out / "faces.jsonl");
  HubServer server(hub, pairs, faces, cfg.annotate.static_dir);
  const int port = server.bind(cfg.annotate.host, cfg.annotate.port);
  std::cerr << "annotation hub listening on http://" << cfg.annotate.host << ":" << port << "\n";

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&] {
    server.wait_until_ready();
    while (!g_interrupted) {
      if (until_complete) {
        bool done = true;
        for (const ItemProgress& p : hub.queue().progress()) done = done && p.collected >= p.required;
        if (done) break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
    server.stop();
  });
  server.serve();
  g_interrupted = true;
  watcher.join();
  std::cerr << "annotation hub stopped; " << hub.store().size() << " annotations stored\n";
}

int run_stages(const Common& common, const std::vector<Stage>& stages, const std::optional<std::string>& mode,
               int port, bool until_complete) {
  PipelineConfig cfg = resolve(common);
  if (mode) cfg.annotate.mode = *mode;
  if (port >= 0) cfg.annotate.port = port;
  cfg.validate();
  Pipeline pipeline(cfg, &std::cerr);
  pipeline.set_serve_hook(
      [until_complete](AnnotationHub& hub, const PipelineConfig& c) { serve_hub(hub, c, until_complete); });
  for (const StageOutcome& o : pipeline.run(stages)) {
    std::cout << to_string(o.stage) << (o.cached ? " cached" : " done");
    for (const auto& p : o.outputs) std::cout << " " << p.generic_string();
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biasbench: synthetic-face bias benchmark pipeline"};
  app.require_subcommand(1);

  struct StageCmd {
    Stage stage;
    CLI::App* cmd;
    Common common;
  };
  std::vector<std::unique_ptr<StageCmd>> stage_cmds;
  for (Stage s : all_stages()) {
    if (s == Stage::Annotate) continue;
    auto sc = std::make_unique<StageCmd>();
    sc->stage = s;
    sc->cmd = app.add_subcommand(std::string(to_string(s)), "run the " + std::string(to_string(s)) + " stage");
    add_common(sc->cmd, sc->common);
    stage_cmds.push_back(std::move(sc));
  }

  Common annotate_common;
  CLI::App* annotate = app.add_subcommand("annotate", "collect pair and single-image annotations");
  annotate->require_subcommand(1);
  CLI::App* simulate = annotate->add_subcommand("simulate", "simulated annotators");
  add_common(simulate, annotate_common);
  CLI::App* serve = annotate->add_subcommand("serve", "serve the annotation hub over HTTP");
  add_common(serve, annotate_common);
  int serve_port = -1;
  bool until_complete = false;
  serve->add_option("--port", serve_port, "listen port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_flag("--until-complete", until_complete, "stop once every item has its annotations");

  Common run_common;
  std::string stage_list = "all";
  CLI::App* run = app.add_subcommand("run", "run several stages in pipeline order");
  add_common(run, run_common);
  run->add_option("--stages", stage_list, "comma-separated stage names, or all");

  CLI11_PARSE(app, argc, argv);

  std::optional<Stage> current;
  try {
    for (const auto& sc : stage_cmds)
      if (sc->cmd->parsed()) {
        current = sc->stage;
        return run_stages(sc->common, {sc->stage}, std::nullopt, -1, false);
      }
    if (simulate->parsed()) {
      current = Stage::Annotate;
      return run_stages(annotate_common, {Stage::Annotate}, "simulate", -1, false);
    }
    if (serve->parsed()) {
      current = Stage::Annotate;
      return run_stages(annotate_common, {Stage::Annotate}, "serve", serve_port, until_complete);
    }
    if (run->parsed()) return run_stages(run_common, parse_stage_list(stage_list), std::nullopt, -1, false);
  } catch (const Error& e) {
    Json report = current ? error_report(*current, e)
                          : Json{{"code", to_string(e.code())}, {"message", e.what()}};
    std::cerr << report.dump() << "\n";
    return e.code() == Errc::Schema || e.code() == Errc::Parse ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << Json{{"code", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
