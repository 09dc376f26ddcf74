// Command-line front end: generate, continue, rank, parse-map, serve.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "scenegen/backends.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/opendrive.hpp"
#include "scenegen/server.hpp"
#include "scenegen/service.hpp"

using namespace scenegen;

namespace {

scenegen::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

PromptMode mode_from(const std::string& s) {
  const auto m = parse_prompt_mode(s);
  if (!m) throw Error("unknown prompt mode '" + s + "'");
  return *m;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void report(const PipelineRun& run, const SceneStore& store) {
  std::cout << "run " << run.id << ": " << to_string(run.status);
  if (run.failure) std::cout << " at " << run.failure->stage << " (" << run.failure->error << ": " << run.failure->message << ")";
  std::cout << "\n";
  if (run.selection) std::cout << "\n" << format_score_table(*run.selection) << "\n";
  if (run.scene) {
    std::cout << "road " << run.scene->provenance.road << ", " << run.scene->frames.size() << " frames, outcome "
              << to_string(run.scene->outcome.kind) << "\n";
    std::cout << "bundle " << store.run_dir(run.id).string() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-scenario generation on OpenDRIVE maps"};
  app.require_subcommand(1);

  std::string maps_dir = SCENEGEN_DEFAULT_MAPS;
  if (const char* env = std::getenv("SCENEGEN_MAPS")) maps_dir = env;
  std::string store_dir = "scenes";
  std::string backend = "mock";
  std::string mode = "analysis_then_stage";
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "Run the full pipeline for a prompt");
  std::string map, prompt;
  gen->add_option("--map", map, "Map name")->required();
  gen->add_option("--prompt", prompt, "Scene description")->required();
  gen->add_option("--backend", backend, "mock, remote or replay:<transcript.jsonl>");
  gen->add_option("--seed", seed);
  gen->add_option("--out", store_dir, "Scene store directory");
  gen->add_option("--maps-dir", maps_dir);
  gen->add_option("--mode", mode, "Prompt mode");

  auto* cont = app.add_subcommand("continue", "Continue a finished run with a new prompt");
  std::string parent;
  cont->add_option("--parent", parent, "Parent run id")->required();
  cont->add_option("--prompt", prompt, "Scene description")->required();
  cont->add_option("--backend", backend);
  cont->add_option("--seed", seed);
  cont->add_option("--out", store_dir, "Scene store directory");
  cont->add_option("--maps-dir", maps_dir);
  cont->add_option("--mode", mode, "Prompt mode");

  auto* rank = app.add_subcommand("rank", "Score every eligible road of a map against a plan");
  std::string plan_path, conditions_path;
  rank->add_option("--map", map, "Map name")->required();
  rank->add_option("--plan", plan_path, "Plan JSON")->required();
  rank->add_option("--conditions", conditions_path, "Condition JSON (default: no filter)");
  rank->add_option("--seed", seed);
  rank->add_option("--maps-dir", maps_dir);

  auto* parse = app.add_subcommand("parse-map", "Parse an OpenDRIVE file and print the road graph JSON");
  std::string xodr;
  parse->add_option("file", xodr)->required();

  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  int slots = 4;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--slots", slots, "Concurrent run slots");
  serve->add_option("--store", store_dir, "Scene store directory");
  serve->add_option("--maps-dir", maps_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      MapRegistry maps(maps_dir);
      SceneStore store(store_dir);
      auto b = make_backend(backend, seed);
      const PipelineRun run =
          run_pipeline(store, maps, PromptRequest{prompt, mode_from(mode), seed}, map, *b, backend);
      report(run, store);
      return run.status == RunStatus::Done ? 0 : 2;
    }
    if (*cont) {
      MapRegistry maps(maps_dir);
      SceneStore store(store_dir);
      auto b = make_backend(backend, seed);
      const PipelineRun run = continue_run(store, maps, parent, PromptRequest{prompt, mode_from(mode), seed}, *b, backend);
      report(run, store);
      return run.status == RunStatus::Done ? 0 : 2;
    }
    if (*rank) {
      MapRegistry maps(maps_dir);
      const RoadGraph& graph = maps.get(map);
      const ScenePlan plan = plan_from_json(nlohmann::json::parse(read_text(plan_path)));
      const ConditionSet conditions =
          conditions_path.empty() ? ConditionSet{} : conditions_from_json(nlohmann::json::parse(read_text(conditions_path)));
      const RankedSelection sel = rank_and_select(graph, retrieve_candidates(graph, conditions), plan, seed);
      std::cout << format_score_table(sel);
      return 0;
    }
    if (*parse) {
      std::cout << save_graph(load_opendrive_file(xodr)) << "\n";
      return 0;
    }
    if (*serve) {
      MapRegistry maps(maps_dir);
      SceneStore store(store_dir);
      ServerOptions options;
      options.run_slots = slots;
      scenegen::Server server(store, maps, options);
      if (!server.bind(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << port << "\n";
      server.serve();
      g_server = nullptr;
      return 0;
    }
  } catch (const ParentNotDoneError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
