#pragma once

// Deterministic 2D rendering of a scene plan on a chosen road: spawn solving,
// kinematic stepping, collision classification and sequential continuation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scenegen/ranker.hpp"
#include "scenegen/road_graph.hpp"
#include "scenegen/schema.hpp"

namespace scenegen {

struct BehaviorProfile {
  double target_speed = 8.0;   // m/s
  double safe_distance = 6.0;  // bumper-to-bumper, m
  double max_accel = 2.5;      // m/s^2
  double max_brake = 6.0;      // m/s^2, before weather friction
};

BehaviorProfile default_profile(Behavior b);

struct Footprint {
  double length = 4.5;
  double width = 1.8;
};

Footprint footprint(AgentType t);

struct SimConfig {
  double dt = 0.1;
  double timeout_s = 60.0;
  std::uint64_t seed = 0;
  double gap_m = 8.0;
  double maneuver_length_m = 12.0;
  double trigger_distance_m = 25.0;
  double walk_speed = 1.4;
  double walk_length_m = 15.0;  // how far "on the sidewalk" walkers go
  double exit_length_m = 30.0;  // how far past a junction routes continue
  std::map<Behavior, BehaviorProfile> profiles{{Behavior::Cautious, default_profile(Behavior::Cautious)},
                                               {Behavior::Normal, default_profile(Behavior::Normal)},
                                               {Behavior::Aggressive, default_profile(Behavior::Aggressive)}};
};

// Agent ids: "ego" for the ego, "a<plan index>" for the rest.
std::string agent_id(const ScenePlan& plan, std::size_t index);

struct SpawnedAgent {
  std::string id;
  RoadId road;
  int lane_id = 0;
  double s = 0.0;  // progress along the road's travel direction
  Pose pose;
};

struct SpawnSolution {
  std::vector<SpawnedAgent> agents;  // plan order
};

// Where the ego starts when a scene continues an earlier one.
struct EgoAnchor {
  RoadId road;
  int lane_id = 0;
  double s = 0.0;
};

SpawnSolution solve_spawns(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan,
                           const SimConfig& config = {}, const std::optional<EgoAnchor>& anchor = std::nullopt);
SpawnSolution solve_spawns(const RoadGraph& graph, const RankedSelection& selection, const ScenePlan& plan,
                           const SimConfig& config = {});

struct AgentState {
  std::string id;
  AgentType type = AgentType::Car;
  ActionKind action = ActionKind::GoStraight;
  Pose pose;
  double speed = 0.0;
  bool done = false;
  RoadId road;
  int lane_id = 0;
  double s = 0.0;
  bool operator==(const AgentState&) const = default;
};

struct Frame {
  int tick = 0;
  double t = 0.0;
  std::vector<AgentState> agents;
  bool operator==(const Frame&) const = default;
  const AgentState& agent(const std::string& id) const;
};

enum class OutcomeKind { Completed, TimedOut, Collision };
std::string_view to_string(OutcomeKind k);

struct Outcome {
  OutcomeKind kind = OutcomeKind::Completed;
  std::vector<std::pair<std::string, std::string>> collisions;
  bool operator==(const Outcome&) const = default;
};

struct Provenance {
  std::string prompt;
  ScenePlan plan;
  std::optional<RankedSelection> selection;
  RoadId road;
  std::uint64_t seed = 0;
  std::vector<std::string> agent_ids;  // plan order; carried agents follow
  bool operator==(const Provenance&) const = default;
};

struct Scene {
  std::vector<Frame> frames;
  Provenance provenance;
  Outcome outcome;
  bool operator==(const Scene&) const = default;
  const Frame& final_frame() const { return frames.back(); }
};

class Simulation {
 public:
  Simulation(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan, const SimConfig& config = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const Frame& frame() const { return frame_; }
  // Advances every agent by dt seconds.
  void step(double dt);
  void step() { step(config_.dt); }
  bool all_done() const;
  // Colliding id pairs in the current frame.
  std::vector<std::pair<std::string, std::string>> collisions() const;
  void set_speed(std::size_t agent, double speed);

 private:
  friend Scene continue_sequence(const RoadGraph&, const Scene&, const ScenePlan&, const SimConfig&);
  struct Agent;
  Simulation(const RoadGraph& graph, const SimConfig& config);
  void build_agent(Agent& a, const AgentPlan& p, const SpawnedAgent& sp, const SpawnedAgent& ego, int index);
  void add_agent(std::unique_ptr<Agent> a);
  void finish_setup();
  void refresh_frame();

  const RoadGraph& graph_;
  SimConfig config_;
  double friction_ = 1.0;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::size_t ego_ = 0;
  Frame frame_;
};

Scene render_scene(const RoadGraph& graph, const RankedSelection& selection, const ScenePlan& plan,
                   const SimConfig& config = {});
Scene render_scene(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan, const SimConfig& config = {});

// Agents of the earlier scene keep their final poses; the ego takes the new
// plan's action and new agents spawn relative to it. Earlier non-ego agents
// are carried along as stationary. Zero steps are run when nothing moves.
Scene continue_sequence(const RoadGraph& graph, const Scene& previous, const ScenePlan& plan,
                        const SimConfig& config = {});

nlohmann::json to_json(const AgentState& a);
nlohmann::json to_json(const Frame& f);
Frame frame_from_json(const nlohmann::json& j);
std::string frames_jsonl(const Scene& scene);
nlohmann::json scene_meta(const Scene& scene);

std::string snapshot_svg(const RoadGraph& graph, const Scene& scene, int tick);

// plan.json, selection.json, frames.jsonl, meta.json, snapshots/tick_<k>.svg
void write_bundle(const std::filesystem::path& dir, const RoadGraph& graph, const Scene& scene,
                  int snapshot_every = 50);
Scene read_bundle(const std::filesystem::path& dir);

}  // namespace scenegen
