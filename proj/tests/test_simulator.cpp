#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "scenegen/errors.hpp"
#include "scenegen/opendrive.hpp"
#include "scenegen/simulator.hpp"

using namespace scenegen;

namespace {

const RoadGraph& map_named(const std::string& name) {
  static std::map<std::string, RoadGraph> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_opendrive_file(std::string(SCENEGEN_MAPS_DIR) + "/" + name)).first;
  return it->second;
}

AgentPlan agent(AgentType type, ActionKind action, RelativePosition rel, int pos,
                LaneKind lane = LaneKind::Driving) {
  AgentPlan a;
  a.type = type;
  a.action = action;
  a.relative_to_ego = rel;
  a.pos_id = pos;
  a.road_type = lane;
  return a;
}

AgentPlan ego(ActionKind action, int pos = 0) {
  AgentPlan a = agent(AgentType::Car, action, RelativePosition::None, pos);
  a.is_ego = true;
  return a;
}

ScenePlan plan_of(std::vector<AgentPlan> agents, bool junction = false) {
  ScenePlan p;
  p.env.at_junction = junction;
  p.agents = std::move(agents);
  return p;
}

ScenePlan ranking_plan() {
  return plan_of({ego(ActionKind::TurnRight, 1),
                  agent(AgentType::Car, ActionKind::TurnRight, RelativePosition::FrontRight, 0),
                  agent(AgentType::Car, ActionKind::TurnLeft, RelativePosition::RoadOfLeftTurn, 0),
                  agent(AgentType::Pedestrian, ActionKind::CrossRoad, RelativePosition::Right, 0, LaneKind::Shoulder)},
                 true);
}

ScenePlan unprotected_left(Behavior ego_behavior) {
  ScenePlan p = plan_of({ego(ActionKind::TurnLeft), agent(AgentType::Car, ActionKind::GoStraight,
                                                          RelativePosition::Front, 0)},
                        true);
  p.agents[0].behavior = ego_behavior;
  p.agents[1].distance = 20.0;
  return p;
}

double dist(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

int driving_index(const RoadNode& n, int lane_id) {
  const auto lanes = n.lanes_of(LaneKind::Driving);
  for (std::size_t i = 0; i < lanes.size(); ++i)
    if (lanes[i]->lane_id == lane_id) return static_cast<int>(i);
  return -1;
}

int count(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (auto at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("spawn: lone ego sits at the road midpoint in the first lane") {
  const RoadGraph& g = map_named("town.xodr");
  for (const RoadId road : {"h00", "v1:rev", "s00S"}) {
    CAPTURE(road);
    const RoadNode& n = g.node(road);
    const SpawnSolution s = solve_spawns(g, road, plan_of({ego(ActionKind::GoStraight)}));
    REQUIRE(s.agents.size() == 1);
    CHECK(s.agents[0].id == "ego");
    CHECK(s.agents[0].road == road);
    CHECK(s.agents[0].s == doctest::Approx(n.length / 2));
    CHECK(s.agents[0].lane_id == n.lanes_of(LaneKind::Driving).front()->lane_id);
    const Pose want = n.lane_pose(s.agents[0].lane_id, n.length / 2);
    CHECK(s.agents[0].pose == want);
    CHECK(s.agents[0].pose.heading == doctest::Approx(n.reference_pose(n.length / 2).heading));
  }
}

TEST_CASE("spawn: ranking scenario on road A") {
  const RoadGraph& g = map_named("ranking_example.xodr");
  RankedSelection sel;
  sel.chosen = "A";
  const SpawnSolution s = solve_spawns(g, sel, ranking_plan());
  REQUIRE(s.agents.size() == 4);
  const RoadNode& a = g.node("A");
  const auto& e = s.agents[0];
  CHECK(e.road == "A");
  CHECK(driving_index(a, e.lane_id) == 0);

  const auto& fr = s.agents[1];
  CHECK(fr.road == "A");
  CHECK(driving_index(a, fr.lane_id) == 1);
  CHECK(fr.s - e.s == doctest::Approx(8.0));

  const auto& left = s.agents[2];
  const auto exits = neighbors(g, "A", Turn::Left);
  REQUIRE(!exits.empty());
  CHECK(left.road == g.sibling(exits.front()->id)->id);
  CHECK(g.node(left.road).find_lane(left.lane_id)->kind == LaneKind::Driving);

  const auto& ped = s.agents[3];
  CHECK(ped.road == "A");
  CHECK(a.find_lane(ped.lane_id)->kind == LaneKind::Shoulder);
  CHECK(ped.s == doctest::Approx(e.s));
}

TEST_CASE("spawn: explicit distance separates a same-lane pair exactly") {
  const RoadGraph& g = map_named("town.xodr");
  for (bool reversed_listing : {false, true}) {
    auto p0 = agent(AgentType::Car, ActionKind::GoStraight, RelativePosition::Front, 0);
    auto p1 = agent(AgentType::Car, ActionKind::GoStraight, RelativePosition::Front, 1);
    p0.distance = p1.distance = 12.0;
    ScenePlan plan = reversed_listing ? plan_of({ego(ActionKind::GoStraight, 2), p1, p0})
                                      : plan_of({ego(ActionKind::GoStraight, 2), p0, p1});
    const SpawnSolution s = solve_spawns(g, "h00", plan);
    const auto& first = s.agents[reversed_listing ? 2 : 1];
    const auto& second = s.agents[reversed_listing ? 1 : 2];
    CHECK(first.lane_id == second.lane_id);
    CHECK(first.s - second.s == doctest::Approx(12.0));
    CHECK(second.s - s.agents[0].s == doctest::Approx(12.0));
  }
}

TEST_CASE("spawn: default separation covers both half lengths and the follower's safe distance") {
  const RoadGraph& g = map_named("town.xodr");
  auto bus = agent(AgentType::Bus, ActionKind::GoStraight, RelativePosition::Front, 0);
  const SpawnSolution s = solve_spawns(g, "h00", plan_of({ego(ActionKind::GoStraight, 1), bus}));
  CHECK(s.agents[1].s - s.agents[0].s == doctest::Approx((12.0 + 4.5) / 2 + 6.0));
  auto car = agent(AgentType::Car, ActionKind::GoStraight, RelativePosition::Back, 1);
  const SpawnSolution t = solve_spawns(g, "h00", plan_of({ego(ActionKind::GoStraight, 0), car}));
  CHECK(t.agents[0].s - t.agents[1].s == doctest::Approx(10.5));
}

TEST_CASE("spawn: infeasible placements name the agent") {
  const RoadGraph& g = map_named("town.xodr");
  auto check_index = [&](const RoadId& road, const ScenePlan& plan, int index) {
    try {
      (void)render_scene(g, road, plan);
      FAIL("expected SpawnError");
    } catch (const SpawnError& e) {
      CHECK(e.agent_index == index);
    }
  };
  // single driving lane, nothing to the left
  check_index("s00S", plan_of({ego(ActionKind::GoStraight), agent(AgentType::Car, ActionKind::GoStraight,
                                                                  RelativePosition::Left, 0)}),
              1);
  // six buses do not fit on a 90 m stub
  std::vector<AgentPlan> many{ego(ActionKind::GoStraight, 6)};
  for (int i = 0; i < 6; ++i) many.push_back(agent(AgentType::Bus, ActionKind::Stop, RelativePosition::Front, i));
  CHECK_THROWS_AS(solve_spawns(g, "s00S", plan_of(many)), SpawnError);
  // explicit distance shorter than the two bodies
  auto close = agent(AgentType::Car, ActionKind::Stop, RelativePosition::Front, 0);
  close.distance = 3.0;
  check_index("h00", plan_of({ego(ActionKind::GoStraight, 1), close}), 1);
  // a turn the four-way's south approach lacks on the t-junction
  const RoadGraph& t = map_named("t_junction.xodr");
  for (const auto& [id, node] : t.nodes()) {
    if (node.is_junction || node.junction_options.empty() || node.junction_options.contains(Turn::Straight)) continue;
    try {
      (void)render_scene(t, id, plan_of({ego(ActionKind::GoStraight)}, true));
      FAIL("expected SpawnError");
    } catch (const SpawnError& e) {
      CHECK(e.agent_index == 0);
    }
  }
}

TEST_CASE("step: a stopped agent never moves") {
  const RoadGraph& g = map_named("town.xodr");
  Simulation sim(g, "h00", plan_of({ego(ActionKind::Stop), agent(AgentType::Truck, ActionKind::Stop,
                                                                 RelativePosition::Front, 0)}));
  const Frame start = sim.frame();
  for (double dt : {0.1, 0.5, 1.0, 0.01}) {
    sim.step(dt);
    for (std::size_t i = 0; i < start.agents.size(); ++i) {
      CHECK(sim.frame().agents[i].pose == start.agents[i].pose);
      CHECK(sim.frame().agents[i].speed == 0.0);
    }
  }
  CHECK_THROWS_AS(sim.step(0.0), std::invalid_argument);
}

TEST_CASE("step: steady 10 m/s for 50 ticks covers 50 m") {
  const RoadGraph& g = map_named("town.xodr");
  SimConfig cfg;
  cfg.profiles[Behavior::Normal].target_speed = 10.0;
  Simulation sim(g, "h00", plan_of({ego(ActionKind::GoStraight)}), cfg);
  sim.set_speed(0, 10.0);
  const AgentState start = sim.frame().agents[0];
  for (int i = 0; i < 50; ++i) sim.step(0.1);
  const AgentState& end = sim.frame().agents[0];
  CHECK(end.s - start.s == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(dist(end.pose, start.pose) == doctest::Approx(50.0).epsilon(1e-6));
  CHECK(end.speed == doctest::Approx(10.0));
}

TEST_CASE("step: followers stop at least a safe distance behind a stopped leader") {
  const RoadGraph& g = map_named("town.xodr");
  for (Behavior b : all_behaviors())
    for (WeatherAdjective w : {WeatherAdjective::Clear, WeatherAdjective::HardRain}) {
      CAPTURE(to_string(b));
      CAPTURE(to_string(w));
      auto lead = agent(AgentType::Car, ActionKind::Stop, RelativePosition::Front, 0);
      lead.distance = 70.0;
      ScenePlan plan = plan_of({ego(ActionKind::GoStraight, 1), lead});
      plan.agents[0].behavior = b;
      plan.env.weather.adjective = w;
      SimConfig cfg;
      const Scene scene = render_scene(g, "h00", plan, cfg);
      CHECK(scene.outcome.kind == OutcomeKind::Completed);
      const auto& f = scene.final_frame();
      const double gap = f.agents[1].s - f.agents[0].s - 4.5;
      CHECK(gap >= default_profile(b).safe_distance - 0.1);
      CHECK(gap < default_profile(b).safe_distance + 1.0);
      for (const Frame& fr : scene.frames) CHECK(fr.agents[0].speed <= default_profile(b).target_speed + 1e-9);
    }
}

TEST_CASE("render: all-stop plan completes at tick 1 with constant poses") {
  const RoadGraph& g = map_named("town.xodr");
  const Scene s = render_scene(g, "v0", plan_of({ego(ActionKind::Stop, 1), agent(AgentType::Car, ActionKind::Stop,
                                                                               RelativePosition::Front, 0),
                                                 agent(AgentType::Pedestrian, ActionKind::Stop,
                                                       RelativePosition::Right, 0, LaneKind::Sidewalk)}));
  CHECK(s.outcome.kind == OutcomeKind::Completed);
  REQUIRE(s.frames.size() == 2);
  CHECK(s.frames[1].tick == 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.frames[1].agents[i].pose == s.frames[0].agents[i].pose);
    CHECK(s.frames[1].agents[i].done);
  }
}

TEST_CASE("render: blockers follow the ego into its new lane") {
  const RoadGraph& g = map_named("town.xodr");
  const ScenePlan plan =
      plan_of({ego(ActionKind::ChangeLaneRight, 2), agent(AgentType::Car, ActionKind::BlockEgo, RelativePosition::Front, 0),
               agent(AgentType::Car, ActionKind::BlockEgo, RelativePosition::Front, 1)});
  SimConfig cfg;
  Simulation sim(g, "h00", plan, cfg);
  const int delay = static_cast<int>(std::ceil(cfg.maneuver_length_m / 1.5 / cfg.dt));
  const int ego_lane0 = sim.frame().agents[0].lane_id;
  CHECK(sim.frame().agents[1].lane_id == ego_lane0);
  CHECK(sim.frame().agents[2].lane_id == ego_lane0);
  int flip = -1;
  std::vector<Frame> frames{sim.frame()};
  for (int k = 1; k <= 400 && !sim.all_done(); ++k) {
    sim.step();
    frames.push_back(sim.frame());
    CHECK(sim.collisions().empty());
    if (flip < 0 && sim.frame().agents[0].lane_id != ego_lane0) flip = k;
  }
  REQUIRE(flip > 0);
  CHECK(sim.all_done());
  const int ego_lane1 = frames.back().agents[0].lane_id;
  CHECK(ego_lane1 != ego_lane0);
  auto tracking = [&](std::size_t k) {
    return frames[k].agents[1].lane_id == frames[k].agents[0].lane_id &&
           frames[k].agents[2].lane_id == frames[k].agents[0].lane_id;
  };
  std::size_t settled = frames.size() - 1;
  while (settled > 0 && tracking(settled - 1)) --settled;
  CHECK(tracking(frames.size() - 1));
  CHECK(static_cast<int>(settled) - flip <= delay);
  // still ahead of the ego
  CHECK(frames.back().agents[2].s > frames.back().agents[0].s);
  CHECK(frames.back().agents[1].s > frames.back().agents[2].s);
}

TEST_CASE("render: unprotected left turn differs by ego behaviour") {
  const RoadGraph& g = map_named("four_way.xodr");
  const Scene bold = render_scene(g, "south", unprotected_left(Behavior::Aggressive));
  CHECK(bold.outcome.kind == OutcomeKind::Collision);
  REQUIRE(bold.outcome.collisions.size() == 1);
  CHECK(bold.outcome.collisions[0] == std::pair<std::string, std::string>{"ego", "a1"});
  const Scene careful = render_scene(g, "south", unprotected_left(Behavior::Cautious));
  CHECK(careful.outcome.kind == OutcomeKind::Completed);
  // the oncoming car starts on the road straight across
  CHECK(careful.frames[0].agents[1].road == g.sibling(neighbors(g, "south", Turn::Straight).front()->id)->id);
}

TEST_CASE("continue: stop-only plan yields one frame equal to the previous end") {
  const RoadGraph& g = map_named("four_way.xodr");
  const Scene first = render_scene(g, "south", unprotected_left(Behavior::Cautious));
  const Scene next = continue_sequence(g, first, plan_of({ego(ActionKind::Stop)}));
  REQUIRE(next.frames.size() == 1);
  const Frame& a = first.final_frame();
  const Frame& b = next.frames[0];
  REQUIRE(a.agents.size() == b.agents.size());
  for (const auto& st : a.agents) CHECK(b.agent(st.id).pose == st.pose);
  CHECK(next.outcome.kind == OutcomeKind::Completed);
}

TEST_CASE("continue: blocked by two cars in front after the left turn") {
  const RoadGraph& g = map_named("four_way.xodr");
  const Scene first = render_scene(g, "south", unprotected_left(Behavior::Cautious));
  REQUIRE(first.outcome.kind == OutcomeKind::Completed);
  const AgentState ego_end = first.final_frame().agent("ego");
  CHECK_FALSE(g.node(ego_end.road).is_junction);

  const ScenePlan plan =
      plan_of({ego(ActionKind::Stop, 2), agent(AgentType::Car, ActionKind::BlockEgo, RelativePosition::Front, 0),
               agent(AgentType::Car, ActionKind::BlockEgo, RelativePosition::Front, 1)});
  const Scene next = continue_sequence(g, first, plan);
  CHECK(next.provenance.agent_ids == std::vector<std::string>{"ego", "a2", "a3", "a1"});
  const Frame& f0 = next.frames[0];
  CHECK(f0.agent("ego").pose == ego_end.pose);
  CHECK(f0.agent("a1").pose == first.final_frame().agent("a1").pose);
  for (const char* id : {"a2", "a3"}) {
    CHECK(f0.agent(id).road == ego_end.road);
    CHECK(f0.agent(id).s > ego_end.s);
  }
  CHECK(f0.agent("a2").s > f0.agent("a3").s);
  CHECK(next.outcome.kind == OutcomeKind::Completed);
}

TEST_CASE("continue: an ego inside a junction cannot anchor a scene") {
  const RoadGraph& g = map_named("four_way.xodr");
  Scene first = render_scene(g, "south", unprotected_left(Behavior::Cautious));
  // cut the scene while the ego is on the connecting road
  while (!g.node(first.final_frame().agent("ego").road).is_junction) first.frames.pop_back();
  CHECK_THROWS_AS(continue_sequence(g, first, plan_of({ego(ActionKind::Stop)})), SpawnError);
}

TEST_CASE("continue: persisting agents keep their poses across many chains") {
  const RoadGraph& g = map_named("town.xodr");
  Scene s = render_scene(g, "h00", plan_of({ego(ActionKind::GoStraight, 1),
                                            agent(AgentType::Car, ActionKind::Stop, RelativePosition::Right, 0)}));
  for (int round = 0; round < 3; ++round) {
    const AgentState end = s.final_frame().agent("ego");
    if (g.node(end.road).is_junction) break;
    Scene next = continue_sequence(g, s, plan_of({ego(ActionKind::Stop)}));
    double worst = 0.0;
    for (const auto& st : s.final_frame().agents) worst = std::max(worst, dist(next.frames[0].agent(st.id).pose, st.pose));
    CHECK(worst == 0.0);
    s = std::move(next);
  }
}

TEST_CASE("snapshot svg") {
  const RoadGraph& g = map_named("ranking_example.xodr");
  const Scene solo = render_scene(g, "A", plan_of({ego(ActionKind::Stop)}));
  const std::string svg = snapshot_svg(g, solo, 0);
  CHECK(count(svg, "<rect class=\"agent\"") == 1);
  CHECK(count(svg, "class=\"agent\"") == 1);
  CHECK(svg.find("#d62728") != std::string::npos);
  CHECK(svg == snapshot_svg(g, solo, 0));
  CHECK_THROWS_AS(snapshot_svg(g, solo, -1), RangeError);
  CHECK_THROWS_AS(snapshot_svg(g, solo, static_cast<int>(solo.frames.size())), RangeError);

  const Scene d = render_scene(g, "A", ranking_plan());
  const std::string d0 = snapshot_svg(g, d, 0);
  CHECK(count(d0, "class=\"agent\"") == 4);
  CHECK(count(d0, "<circle class=\"agent\"") == 1);
  CHECK(count(d0, "class=\"lane shoulder\" fill=\"#c8793a\"") >= 1);
  const Scene again = render_scene(g, "A", ranking_plan());
  CHECK(snapshot_svg(g, again, 0) == d0);
  CHECK(snapshot_svg(g, again, static_cast<int>(again.frames.size()) - 1) ==
        snapshot_svg(g, d, static_cast<int>(d.frames.size()) - 1));
}

TEST_CASE("frames jsonl and bundle round trip") {
  const RoadGraph& g = map_named("ranking_example.xodr");
  RankedSelection sel;
  sel.chosen = "A";
  sel.seed = 3;
  Scene s = render_scene(g, sel, ranking_plan());
  s.provenance.prompt = "test prompt";
  const std::string jsonl = frames_jsonl(s);
  CHECK(count(jsonl, "\n") == static_cast<int>(s.frames.size()));
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  for (const char* k : {"tick", "t", "agents"}) CHECK(first.contains(k));
  for (const char* k : {"id", "type", "x", "y", "heading", "speed", "action", "done"})
    CHECK(first.at("agents").at(0).contains(k));
  CHECK(frame_from_json(first) == s.frames[0]);

  const auto dir = std::filesystem::temp_directory_path() / ("scenegen_bundle_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  write_bundle(dir, g, s, 25);
  for (const char* f : {"plan.json", "selection.json", "frames.jsonl", "meta.json", "snapshots/tick_0.svg"})
    CHECK(std::filesystem::exists(dir / f));
  const Scene back = read_bundle(dir);
  CHECK(back == s);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_bundle(dir), NotFoundError);
}

// ---- properties over generated plans ---------------------------------------

namespace {

struct Generated {
  RoadId road;
  ScenePlan plan;
};

Generated random_plan(std::mt19937& rng, const RoadGraph& g, const std::vector<RoadId>& roads, bool straight_only) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  Generated out;
  out.road = roads[static_cast<std::size_t>(pick(static_cast<int>(roads.size())))];
  const RoadNode& n = g.node(out.road);
  const int lanes = n.driving_lane_count();
  const std::vector<ActionKind> moves{ActionKind::GoStraight, ActionKind::Stop, ActionKind::TurnLeft,
                                      ActionKind::TurnRight};
  const std::vector<Behavior> behaviours{Behavior::Cautious, Behavior::Normal, Behavior::Aggressive};
  const std::vector<AgentType> types{AgentType::Car, AgentType::Truck, AgentType::Bus, AgentType::Motorcycle,
                                     AgentType::Police};
  auto move = [&] { return straight_only ? ActionKind::GoStraight : moves[static_cast<std::size_t>(pick(4))]; };

  // front-to-back order per lane column: -1 left, 0 ego lane, +1 right
  std::map<int, std::vector<AgentPlan>> columns;
  AgentPlan e = ego(move());
  e.behavior = behaviours[static_cast<std::size_t>(pick(3))];
  const int extra = pick(5);
  std::vector<AgentPlan> ahead, behind;
  for (int k = 0; k < extra; ++k) {
    int col = straight_only ? 0 : pick(3) - 1;
    if (lanes < 2) col = 0;
    const bool front = pick(2) == 0;
    RelativePosition rel = front ? RelativePosition::Front : RelativePosition::Back;
    if (col == -1) rel = front ? RelativePosition::FrontLeft : RelativePosition::BackLeft;
    if (col == 1) rel = front ? RelativePosition::FrontRight : RelativePosition::BackRight;
    AgentPlan a = agent(types[static_cast<std::size_t>(pick(5))], move(), rel, 0);
    a.behavior = behaviours[static_cast<std::size_t>(pick(3))];
    (front ? ahead : behind).push_back(a);
  }
  int pos = 0;
  for (auto& a : ahead) a.pos_id = pos++;
  e.pos_id = pos++;
  for (auto& a : behind) a.pos_id = pos++;
  std::vector<AgentPlan> all{e};
  all.insert(all.end(), ahead.begin(), ahead.end());
  all.insert(all.end(), behind.begin(), behind.end());
  std::shuffle(all.begin() + 1, all.end(), rng);
  out.plan = plan_of(all, !straight_only);
  return out;
}

std::vector<RoadId> approach_roads(const RoadGraph& g) {
  std::vector<RoadId> out;
  for (const auto& [id, n] : g.nodes())
    if (!n.is_junction && n.junction_options.size() == 3) out.push_back(id);
  return out;
}

}  // namespace

TEST_CASE("property: spawn order, no teleporting, termination and determinism") {
  const RoadGraph& g = map_named("town.xodr");
  const auto roads = approach_roads(g);
  std::mt19937 rng(77);
  SimConfig cfg;
  const double max_speed = 12.0;
  const std::size_t max_frames = static_cast<std::size_t>(cfg.timeout_s / cfg.dt) + 1;
  int rendered = 0, spawn_errors = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Generated gen = random_plan(rng, g, roads, false);
    CAPTURE(trial);
    SpawnSolution spawn;
    try {
      spawn = solve_spawns(g, gen.road, gen.plan, cfg);
    } catch (const SpawnError&) {
      ++spawn_errors;
      continue;
    }
    const auto& agents = gen.plan.agents;
    for (std::size_t i = 0; i < agents.size(); ++i)
      for (std::size_t j = 0; j < agents.size(); ++j) {
        if (spawn.agents[i].road != spawn.agents[j].road || spawn.agents[i].lane_id != spawn.agents[j].lane_id) continue;
        if (agents[i].pos_id < agents[j].pos_id) CHECK(spawn.agents[i].s > spawn.agents[j].s);
      }
    for (std::size_t i = 0; i < agents.size(); ++i)
      for (std::size_t j = i + 1; j < agents.size(); ++j)
        CHECK(dist(spawn.agents[i].pose, spawn.agents[j].pose) > 1.0);

    Scene a;
    try {
      a = render_scene(g, gen.road, gen.plan, cfg);
    } catch (const SpawnError&) {
      ++spawn_errors;  // a planned turn the road cannot make
      continue;
    }
    ++rendered;
    CHECK(a.frames.size() <= max_frames + 1);
    for (std::size_t k = 1; k < a.frames.size(); ++k) {
      CHECK(a.frames[k].tick == a.frames[k - 1].tick + 1);
      for (std::size_t i = 0; i < agents.size(); ++i)
        CHECK(dist(a.frames[k].agents[i].pose, a.frames[k - 1].agents[i].pose) <= max_speed * cfg.dt + 0.5);
    }
    const Scene b = render_scene(g, gen.road, gen.plan, cfg);
    CHECK(frames_jsonl(a) == frames_jsonl(b));
    CHECK(a.outcome == b.outcome);
  }
  CHECK(rendered >= 30);
  MESSAGE("rendered " << rendered << ", spawn errors " << spawn_errors);
}

TEST_CASE("property: same-lane followers keep their safe distance") {
  const RoadGraph& g = map_named("town.xodr");
  const std::vector<RoadId> roads{"h00", "h11", "v0", "v2:rev"};
  std::mt19937 rng(5);
  SimConfig cfg;
  const int settle = 20;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Generated gen = random_plan(rng, g, roads, true);
    const Scene s = render_scene(g, gen.road, gen.plan, cfg);
    if (s.outcome.kind != OutcomeKind::Completed) continue;
    const auto& agents = gen.plan.agents;
    for (std::size_t k = settle; k < s.frames.size(); ++k) {
      const Frame& f = s.frames[k];
      for (std::size_t i = 0; i < agents.size(); ++i)
        for (std::size_t j = 0; j < agents.size(); ++j) {
          const AgentState& lead = f.agents[i];
          const AgentState& back = f.agents[j];
          if (i == j || lead.done || back.done || lead.road != back.road || lead.lane_id != back.lane_id) continue;
          if (lead.s <= back.s || g.node(lead.road).is_junction) continue;
          const double gap = lead.s - back.s - (footprint(agents[i].type).length + footprint(agents[j].type).length) / 2;
          CHECK(gap >= cfg.profiles.at(agents[j].behavior).safe_distance - 0.1);
          ++checked;
        }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("property: cautious is slower than normal, normal slower than aggressive") {
  const RoadGraph& g = map_named("town.xodr");
  for (const RoadId road : {"h00", "v1", "s00W"}) {
    for (ActionKind act : {ActionKind::GoStraight, ActionKind::TurnLeft, ActionKind::TurnRight}) {
      std::map<Behavior, std::size_t> ticks;
      for (Behavior b : all_behaviors()) {
        ScenePlan p = plan_of({ego(act)}, true);
        p.agents[0].behavior = b;
        const Scene s = render_scene(g, road, p);
        CHECK(s.outcome.kind == OutcomeKind::Completed);
        ticks[b] = s.frames.size();
      }
      CHECK(ticks[Behavior::Cautious] > ticks[Behavior::Normal]);
      CHECK(ticks[Behavior::Normal] > ticks[Behavior::Aggressive]);
    }
  }
}

TEST_CASE("pedestrians: crossing waits for the ego, sidewalk walkers stroll") {
  const RoadGraph& g = map_named("town.xodr");
  auto ped = agent(AgentType::Pedestrian, ActionKind::CrossRoad, RelativePosition::Front, 0, LaneKind::Sidewalk);
  ped.distance = 60.0;
  const Scene s = render_scene(g, "h00", plan_of({ego(ActionKind::GoStraight, 1), ped}));
  CHECK(s.outcome.kind == OutcomeKind::Completed);
  std::size_t first_move = 0;
  for (std::size_t k = 1; k < s.frames.size() && !first_move; ++k)
    if (dist(s.frames[k].agents[1].pose, s.frames[0].agents[1].pose) > 0.0) first_move = k;
  REQUIRE(first_move > 0);
  CHECK(dist(s.frames[first_move - 1].agents[0].pose, s.frames[0].agents[1].pose) <= 25.0 + 1e-9);
  CHECK(first_move > 1);

  const Scene w = render_scene(g, "h00", plan_of({ego(ActionKind::Stop), agent(AgentType::Pedestrian,
                                                                                ActionKind::OnSidewalk,
                                                                                RelativePosition::Right, 0,
                                                                                LaneKind::Sidewalk)}));
  CHECK(w.outcome.kind == OutcomeKind::Completed);
  const AgentState& end = w.final_frame().agents[1];
  CHECK(end.s - w.frames[0].agents[1].s == doctest::Approx(15.0));
  CHECK(w.frames[5].agents[1].speed == doctest::Approx(1.4));
}
