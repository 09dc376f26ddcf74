#pragma once

// End-to-end pipeline runs (analyze, retrieve, plan, rank, render), their
// on-disk store with continuation lineage, and the map registry.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenegen/backend.hpp"
#include "scenegen/planner.hpp"
#include "scenegen/ranker.hpp"
#include "scenegen/road_graph.hpp"
#include "scenegen/simulator.hpp"

namespace scenegen {

class MapRegistry {
 public:
  MapRegistry() = default;
  // Loads every .xodr file in `dir`; a graph JSON cache is kept next to each.
  explicit MapRegistry(const std::filesystem::path& dir);

  void add(const std::string& name, RoadGraph graph);
  // Accepts "town" or "town.xodr".
  const RoadGraph& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<const RoadGraph>> maps_;
};

enum class RunStatus { Pending, Running, Failed, Done };
std::string_view to_string(RunStatus s);

struct RunFailure {
  std::string stage;  // analysis, retrieval, planning, ranking, rendering
  std::string error;  // error type, e.g. NoCandidateError
  std::string message;
  bool operator==(const RunFailure&) const = default;
};

struct PipelineRun {
  std::string id;
  std::optional<std::string> parent;
  PromptRequest request;
  std::string map;
  std::string backend;
  RunStatus status = RunStatus::Pending;
  std::optional<RunFailure> failure;
  std::string created_at;
  std::string updated_at;

  std::optional<AnalysisContext> context;
  std::optional<ConditionSet> conditions;
  std::optional<CandidateSet> candidates;
  std::optional<ScenePlan> plan;
  std::optional<RankedSelection> selection;
  std::optional<Scene> scene;
};

// Summary form: artifacts inline, the scene as outcome and frame count.
nlohmann::json to_json(const PipelineRun& run);
PipelineRun run_from_json(const nlohmann::json& j);

// One directory per run (run.json plus the scene bundle) and index.json
// mapping ids to directories. Every file is replaced atomically.
class SceneStore {
 public:
  explicit SceneStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::string new_id();
  // Persists run.json (and the bundle once a scene is present).
  void save(const PipelineRun& run, const RoadGraph* graph = nullptr);
  std::optional<PipelineRun> find(const std::string& id) const;
  PipelineRun get(const std::string& id) const;  // NotFoundError
  std::vector<std::string> ids() const;
  std::vector<std::string> children(const std::string& id) const;
  std::filesystem::path run_dir(const std::string& id) const { return root_ / "runs" / id; }

 private:
  void write_index() const;
  std::mutex& lock_for(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> run_locks_;
  std::map<std::string, std::shared_ptr<const PipelineRun>> runs_;
  std::uint64_t next_ = 1;
};

struct PipelineOptions {
  PlannerOptions planner;
  RankerOptions ranker;
  SimConfig sim;
  int snapshot_every = 50;
};

// Runs every stage in order, persisting after each. Stage errors end the run
// as failed(stage, error) rather than propagating.
PipelineRun run_pipeline(SceneStore& store, const MapRegistry& maps, const PromptRequest& request,
                         const std::string& map, PlannerBackend& backend, const std::string& backend_name = "mock",
                         const PipelineOptions& options = {});

// Analysis (per the prompt mode) and planning only, rendered from the parent's
// final frame. Throws NotFoundError for an unknown parent and
// ParentNotDoneError when the parent has no finished scene.
PipelineRun continue_run(SceneStore& store, const MapRegistry& maps, const std::string& parent_id,
                         const PromptRequest& request, PlannerBackend& backend,
                         const std::string& backend_name = "mock", const PipelineOptions& options = {});

// Plain-text scoring table: one row per candidate, one column per check.
std::string format_score_table(const RankedSelection& selection);

}  // namespace scenegen
