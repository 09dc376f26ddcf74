#include "scenegen/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "scenegen/errors.hpp"
#include "scenegen/opendrive.hpp"

namespace scenegen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << bytes;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Maps

MapRegistry::MapRegistry(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("map directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".xodr") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& xodr : files) {
    const fs::path cache = fs::path(xodr).replace_extension(".graph.json");
    std::optional<RoadGraph> graph;
    std::error_code ec;
    if (fs::exists(cache, ec) && fs::last_write_time(cache, ec) >= fs::last_write_time(xodr, ec)) {
      try {
        std::ifstream in(cache);
        std::stringstream ss;
        ss << in.rdbuf();
        graph = load_graph(ss.str());
      } catch (const std::exception&) {
        graph.reset();
      }
    }
    if (!graph) {
      graph = load_opendrive_file(xodr);
      try {
        write_atomic(cache, save_graph(*graph));
      } catch (const std::exception&) {
        // read-only map directory
      }
    }
    add(xodr.stem().string(), std::move(*graph));
  }
}

void MapRegistry::add(const std::string& name, RoadGraph graph) {
  maps_[name] = std::make_shared<const RoadGraph>(std::move(graph));
}

namespace {

std::string map_key(const std::string& name) {
  return name.ends_with(".xodr") ? name.substr(0, name.size() - 5) : name;
}

}  // namespace

const RoadGraph& MapRegistry::get(const std::string& name) const {
  auto it = maps_.find(map_key(name));
  if (it == maps_.end()) throw NotFoundError("unknown map '" + name + "'");
  return *it->second;
}

bool MapRegistry::contains(const std::string& name) const { return maps_.contains(map_key(name)); }

std::vector<std::string> MapRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : maps_) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Runs

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Running: return "running";
    case RunStatus::Failed: return "failed";
    case RunStatus::Done: return "done";
  }
  return "pending";
}

namespace {

RunStatus parse_status(const std::string& s) {
  for (RunStatus r : {RunStatus::Pending, RunStatus::Running, RunStatus::Failed, RunStatus::Done})
    if (to_string(r) == s) return r;
  throw SerializationError("unknown run status '" + s + "'");
}

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

json candidates_json(const CandidateSet& c) { return {{"roads", c.roads}, {"conditions", to_json(c.conditions)}}; }

std::string error_name(const std::exception& e) {
  if (dynamic_cast<const RepairExhaustedError*>(&e)) return "RepairExhaustedError";
  if (dynamic_cast<const NoCandidateError*>(&e)) return "NoCandidateError";
  if (dynamic_cast<const SpawnError*>(&e)) return "SpawnError";
  if (dynamic_cast<const EmptyPromptError*>(&e)) return "EmptyPromptError";
  if (dynamic_cast<const BackendError*>(&e)) return "BackendError";
  if (dynamic_cast<const SerializationError*>(&e)) return "SerializationError";
  if (dynamic_cast<const NotFoundError*>(&e)) return "NotFoundError";
  if (dynamic_cast<const RangeError*>(&e)) return "RangeError";
  if (dynamic_cast<const ParentNotDoneError*>(&e)) return "ParentNotDoneError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

}  // namespace

json to_json(const PipelineRun& run) {
  json j{{"id", run.id},
         {"parent", run.parent ? json(*run.parent) : json(nullptr)},
         {"request",
          {{"text", run.request.text}, {"mode", std::string(to_string(run.request.mode))}, {"seed", run.request.seed}}},
         {"map", run.map},
         {"backend", run.backend},
         {"status", std::string(to_string(run.status))},
         {"created_at", run.created_at},
         {"updated_at", run.updated_at}};
  j["failure"] = run.failure ? json{{"stage", run.failure->stage},
                                    {"error", run.failure->error},
                                    {"message", run.failure->message}}
                             : json(nullptr);
  json artifacts = json::object();
  if (run.context) artifacts["analysis"] = to_json(*run.context);
  if (run.conditions) artifacts["conditions"] = to_json(*run.conditions);
  if (run.candidates) artifacts["candidates"] = candidates_json(*run.candidates);
  if (run.plan) artifacts["plan"] = to_json(*run.plan);
  if (run.selection) artifacts["selection"] = to_json(*run.selection);
  if (run.scene) {
    json collisions = json::array();
    for (const auto& [a, b] : run.scene->outcome.collisions) collisions.push_back({a, b});
    artifacts["scene"] = {{"frames", run.scene->frames.size()},
                          {"road", run.scene->provenance.road},
                          {"agent_ids", run.scene->provenance.agent_ids},
                          {"outcome", {{"kind", std::string(to_string(run.scene->outcome.kind))},
                                       {"collisions", collisions}}}};
  }
  j["artifacts"] = std::move(artifacts);
  return j;
}

PipelineRun run_from_json(const json& j) {
  try {
    PipelineRun r;
    r.id = j.at("id").get<std::string>();
    if (!j.at("parent").is_null()) r.parent = j.at("parent").get<std::string>();
    const json& req = j.at("request");
    r.request.text = req.at("text").get<std::string>();
    const auto mode = parse_prompt_mode(req.at("mode").get<std::string>());
    if (!mode) throw SerializationError("unknown prompt mode");
    r.request.mode = *mode;
    r.request.seed = req.at("seed").get<std::uint64_t>();
    r.map = j.at("map").get<std::string>();
    r.backend = j.at("backend").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.created_at = j.at("created_at").get<std::string>();
    r.updated_at = j.at("updated_at").get<std::string>();
    if (const json& f = j.at("failure"); !f.is_null())
      r.failure = RunFailure{f.at("stage").get<std::string>(), f.at("error").get<std::string>(),
                             f.at("message").get<std::string>()};
    const json& a = j.at("artifacts");
    if (a.contains("analysis")) r.context = analysis_from_json(a.at("analysis"));
    if (a.contains("conditions")) r.conditions = conditions_from_json(a.at("conditions"));
    if (a.contains("candidates"))
      r.candidates = CandidateSet{a.at("candidates").at("roads").get<std::vector<RoadId>>(),
                                  conditions_from_json(a.at("candidates").at("conditions"))};
    if (a.contains("plan")) r.plan = plan_from_json(a.at("plan"));
    if (a.contains("selection")) r.selection = selection_from_json(a.at("selection"));
    return r;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("bad run record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Store

namespace {

// The first stage without its artifact, for runs cut short.
std::string interrupted_stage(const PipelineRun& r) {
  if (uses_analysis(r.request.mode) && !r.context) return "analysis";
  if (!r.parent && !r.candidates) return "retrieval";
  if (!r.plan) return "planning";
  if (!r.parent && !r.selection) return "ranking";
  return "rendering";
}

}  // namespace

SceneStore::SceneStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "runs");
  const fs::path index = root_ / "index.json";
  if (!fs::exists(index)) {
    write_index();
    return;
  }
  json j;
  try {
    j = json::parse(read_file(index));
  } catch (const json::exception& e) {
    throw SerializationError("bad store index: " + std::string(e.what()));
  }
  next_ = j.value("next", std::uint64_t{1});
  for (const auto& [id, rel] : j.at("runs").items()) {
    const fs::path dir = root_ / rel.get<std::string>();
    if (!fs::exists(dir / "run.json")) continue;
    PipelineRun run = run_from_json(json::parse(read_file(dir / "run.json")));
    if (run.status == RunStatus::Done) {
      run.scene = read_bundle(dir);
    } else if (run.status == RunStatus::Pending || run.status == RunStatus::Running) {
      run.status = RunStatus::Failed;
      run.failure = RunFailure{interrupted_stage(run), "Interrupted", "run stopped before finishing"};
    }
    runs_[id] = std::make_shared<const PipelineRun>(std::move(run));
  }
}

void SceneStore::write_index() const {
  json runs = json::object();
  for (const auto& [id, r] : runs_) runs[id] = "runs/" + id;
  write_atomic(root_ / "index.json", json{{"next", next_}, {"runs", runs}}.dump(2) + "\n");
}

std::string SceneStore::new_id() {
  std::lock_guard lock(mu_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "run-%06llu", static_cast<unsigned long long>(next_++));
  write_index();
  return buf;
}

std::mutex& SceneStore::lock_for(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto& m = run_locks_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

void SceneStore::save(const PipelineRun& run, const RoadGraph* graph) {
  {
    std::lock_guard run_lock(lock_for(run.id));
    const fs::path dir = run_dir(run.id);
    fs::create_directories(dir);
    if (run.scene && graph) write_bundle(dir, *graph, *run.scene);
    write_atomic(dir / "run.json", to_json(run).dump(2) + "\n");
  }
  std::lock_guard lock(mu_);
  const bool fresh = !runs_.contains(run.id);
  runs_[run.id] = std::make_shared<const PipelineRun>(run);
  if (fresh) write_index();
}

std::optional<PipelineRun> SceneStore::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(id);
  if (it == runs_.end()) return std::nullopt;
  return *it->second;
}

PipelineRun SceneStore::get(const std::string& id) const {
  auto r = find(id);
  if (!r) throw NotFoundError("unknown run '" + id + "'");
  return *r;
}

std::vector<std::string> SceneStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, r] : runs_) out.push_back(id);
  return out;
}

std::vector<std::string> SceneStore::children(const std::string& id) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [cid, r] : runs_)
    if (r->parent == id) out.push_back(cid);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

PipelineRun start_run(SceneStore& store, const PromptRequest& request, const std::string& map,
                      const std::string& backend_name) {
  PipelineRun run;
  run.id = store.new_id();
  run.request = request;
  run.map = map;
  run.backend = backend_name;
  run.status = RunStatus::Running;
  run.created_at = run.updated_at = now_iso();
  return run;
}

void checkpoint(SceneStore& store, PipelineRun& run) {
  run.updated_at = now_iso();
  store.save(run);
}

void fail(PipelineRun& run, const std::string& stage, const std::exception& e) {
  run.status = RunStatus::Failed;
  run.failure = RunFailure{stage, error_name(e), e.what()};
}

}  // namespace

PipelineRun run_pipeline(SceneStore& store, const MapRegistry& maps, const PromptRequest& request,
                         const std::string& map, PlannerBackend& backend, const std::string& backend_name,
                         const PipelineOptions& options) {
  const RoadGraph& graph = maps.get(map);
  PipelineRun run = start_run(store, request, map, backend_name);
  checkpoint(store, run);
  std::string stage;
  try {
    if (uses_analysis(request.mode)) {
      stage = "analysis";
      run.context = analyze(request, backend, options.planner);
      checkpoint(store, run);
    }
    stage = "retrieval";
    run.conditions = derive_conditions(request, run.context, backend, options.planner);
    checkpoint(store, run);
    run.candidates = retrieve_candidates(graph, *run.conditions);
    checkpoint(store, run);
    stage = "planning";
    run.plan = plan_agents(request, run.context, backend, options.planner);
    checkpoint(store, run);
    stage = "ranking";
    run.selection = rank_and_select(graph, *run.candidates, *run.plan, request.seed, options.ranker);
    checkpoint(store, run);
    stage = "rendering";
    SimConfig cfg = options.sim;
    cfg.seed = request.seed;
    Scene scene = render_scene(graph, *run.selection, *run.plan, cfg);
    scene.provenance.prompt = request.text;
    run.scene = std::move(scene);
    run.status = RunStatus::Done;
  } catch (const std::exception& e) {
    fail(run, stage, e);
  }
  run.updated_at = now_iso();
  store.save(run, &graph);
  return run;
}

PipelineRun continue_run(SceneStore& store, const MapRegistry& maps, const std::string& parent_id,
                         const PromptRequest& request, PlannerBackend& backend, const std::string& backend_name,
                         const PipelineOptions& options) {
  const PipelineRun parent = store.get(parent_id);
  if (parent.status != RunStatus::Done || !parent.scene)
    throw ParentNotDoneError("run " + parent_id + " is " + std::string(to_string(parent.status)));
  const RoadGraph& graph = maps.get(parent.map);
  PipelineRun run = start_run(store, request, parent.map, backend_name);
  run.parent = parent_id;
  checkpoint(store, run);
  std::string stage;
  try {
    if (uses_analysis(request.mode)) {
      stage = "analysis";
      run.context = analyze(request, backend, options.planner);
      checkpoint(store, run);
    }
    stage = "planning";
    run.plan = plan_agents(request, run.context, backend, options.planner);
    checkpoint(store, run);
    stage = "rendering";
    SimConfig cfg = options.sim;
    cfg.seed = request.seed;
    Scene scene = continue_sequence(graph, *parent.scene, *run.plan, cfg);
    scene.provenance.prompt = request.text;
    run.scene = std::move(scene);
    run.status = RunStatus::Done;
  } catch (const std::exception& e) {
    fail(run, stage, e);
  }
  run.updated_at = now_iso();
  store.save(run, &graph);
  return run;
}

std::string format_score_table(const RankedSelection& selection) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Road"};
  header.insert(header.end(), selection.checks.begin(), selection.checks.end());
  header.push_back("Total");
  rows.push_back(header);
  for (const auto& [road, score] : selection.scores) {
    std::vector<std::string> row{road == selection.chosen ? road + " *" : road};
    for (const auto& [name, ok] : score.per_check) row.push_back(ok ? "yes" : "no");
    row.push_back(std::to_string(score.total));
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out += rows[r][c];
      if (c + 1 < rows[r].size()) out += std::string(width[c] - rows[r][c].size() + 2, ' ');
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

}  // namespace scenegen
