#include "scenegen/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "scenegen/errors.hpp"
#include "sim_internal.hpp"

namespace scenegen {

namespace {

enum class Mode { Static, Route, Lateral };

constexpr double kStationary = 0.05;
constexpr double kLookAhead = 60.0;
constexpr double kCorridorMargin = 0.3;
constexpr double kMinManeuverSpeed = 1.5;
constexpr double kYieldMargin = 4.0;
constexpr double kYieldHorizon_s = 5.0;
constexpr double kYieldRange = 30.0;

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Highest speed from which the agent can still stop within `room` metres
// after one more tick of travel.
double safe_speed(double room, double brake, double dt) {
  if (room <= 0.0) return 0.0;
  return -brake * dt + std::sqrt(brake * brake * dt * dt + 2.0 * brake * room);
}

double walk_speed(Behavior b, const SimConfig& c) {
  switch (b) {
    case Behavior::Cautious: return 1.0;
    case Behavior::Normal: return c.walk_speed;
    case Behavior::Aggressive: return 2.5;
  }
  return c.walk_speed;
}

// Seconds needed to cover `dist` starting at v0 with acceleration a up to vmax.
double arrival_time(double dist, double v0, double a, double vmax) {
  if (dist <= 0.0) return 0.0;
  if (v0 >= vmax || a <= 0.0) return dist / std::max(v0, 0.1);
  const double t_acc = (vmax - v0) / a;
  const double d_acc = (v0 + vmax) / 2.0 * t_acc;
  if (dist >= d_acc) return t_acc + (dist - d_acc) / vmax;
  return (-v0 + std::sqrt(v0 * v0 + 2.0 * a * dist)) / a;
}

}  // namespace

struct Simulation::Agent {
  struct Conflict {
    std::size_t other;
    double d_self;
    double d_other;
  };

  std::string id;
  AgentPlan plan;
  BehaviorProfile profile;
  Footprint fp;
  Mode mode = Mode::Static;
  bool walker = false;    // moves at constant walking speed along its route
  bool waiting = false;   // crossing not yet triggered
  bool done = false;
  bool parked = false;    // stays an obstacle once done
  double speed = 0.0;
  Pose pose;
  RoadId road;
  int lane_id = 0;
  double s = 0.0;

  detail::Route route;
  double d = 0.0;

  const RoadNode* node = nullptr;
  double lat = 0.0;
  double lat_from = 0.0;
  double lat_to = 0.0;
  double progress = 1.0;  // lane change completion in [0, 1]
  bool blocker = false;
  double hold_offset = 0.0;

  std::vector<Conflict> conflicts;

  bool vehicle() const { return !is_pedestrian(plan.type); }
  bool present() const { return !done || parked; }
  double target_speed() const {
    return plan.type == AgentType::Cyclist ? std::min(profile.target_speed, 6.0) : profile.target_speed;
  }

  void sync() {
    if (mode == Mode::Route) {
      pose = route.at(d);
      const auto w = route.where(d);
      road = w.road;
      lane_id = w.lane_id;
      s = w.s;
    } else if (mode == Mode::Lateral) {
      pose = node->offset_pose(lat, s);
      road = node->id;
      double best = 1e300;
      for (const Lane* l : node->lanes_of(LaneKind::Driving)) {
        const double e = std::abs(node->lateral_offset(l->lane_id) - lat);
        if (e < best) best = e, lane_id = l->lane_id;
      }
    }
  }
};

Simulation::Simulation(const RoadGraph& graph, const SimConfig& config) : graph_(graph), config_(config) {}

Simulation::~Simulation() = default;

Simulation::Simulation(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan, const SimConfig& config)
    : Simulation(graph, config) {
  const SpawnSolution spawn = solve_spawns(graph, road, plan, config);
  friction_ = plan.env.weather.friction();
  ego_ = plan.ego_index();
  const SpawnedAgent& ego_spawn = spawn.agents[ego_];
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    auto a = std::make_unique<Agent>();
    a->id = spawn.agents[i].id;
    build_agent(*a, plan.agents[i], spawn.agents[i], ego_spawn, static_cast<int>(i));
    add_agent(std::move(a));
  }
  finish_setup();
}

void Simulation::build_agent(Agent& a, const AgentPlan& p, const SpawnedAgent& sp, const SpawnedAgent& ego,
                             int index) {
  a.plan = p;
  a.profile = config_.profiles.at(p.behavior);
  a.fp = footprint(p.type);
  a.pose = sp.pose;
  a.road = sp.road;
  a.lane_id = sp.lane_id;
  a.s = sp.s;
  const RoadNode& node = graph_.node(sp.road);
  const bool ped = is_pedestrian(p.type);

  auto walk_to = [&](const Pose& target) {
    a.mode = Mode::Route;
    a.walker = true;
    a.route = detail::line_route(sp.pose, target, sp.road, sp.lane_id, sp.s);
  };

  switch (p.action) {
    case ActionKind::Stop:
      a.mode = Mode::Static;
      a.done = true;
      a.parked = true;
      break;
    case ActionKind::BlockEgo:
      a.parked = true;
      if (ped) {
        const RoadNode& ego_node = graph_.node(ego.road);
        double u = sp.s;
        if (sp.road != ego.road) {
          const RoadNode* sib = graph_.sibling(ego.road);
          u = sib && sib->id == sp.road ? sib->length - sp.s : sp.s;
        }
        walk_to(ego_node.lane_pose(ego.lane_id, std::clamp(u, 0.0, ego_node.length)));
      } else {
        a.mode = Mode::Lateral;
        a.node = &node;
        a.lat = a.lat_from = a.lat_to = node.lateral_offset(sp.lane_id);
        a.blocker = true;
        a.hold_offset = sp.road == ego.road ? sp.s - ego.s : 0.0;
      }
      break;
    case ActionKind::ChangeLaneLeft:
    case ActionKind::ChangeLaneRight: {
      const auto lanes = node.lanes_of(LaneKind::Driving);
      int k = -1;
      for (std::size_t j = 0; j < lanes.size(); ++j)
        if (lanes[j]->lane_id == sp.lane_id) k = static_cast<int>(j);
      const int target = k + (p.action == ActionKind::ChangeLaneLeft ? -1 : 1);
      if (k < 0 || target < 0 || target >= static_cast<int>(lanes.size()))
        throw SpawnError("no lane to change into on road " + node.id, index);
      a.mode = Mode::Lateral;
      a.node = &node;
      a.lat = a.lat_from = node.lateral_offset(sp.lane_id);
      a.lat_to = node.lateral_offset(lanes[static_cast<std::size_t>(target)]->lane_id);
      a.progress = 0.0;
      break;
    }
    case ActionKind::TurnLeft:
    case ActionKind::TurnRight:
    case ActionKind::GoStraight:
      if (ped) {
        a.mode = Mode::Route;
        a.walker = true;
        detail::append_lane(a.route, node, sp.lane_id, sp.s, std::min(node.length, sp.s + config_.walk_length_m));
      } else {
        a.mode = Mode::Route;
        a.route = detail::movement_route(graph_, node, sp.lane_id, sp.s, *turn_of(p.action), config_.exit_length_m,
                                         index);
      }
      break;
    case ActionKind::CrossRoad: {
      const RoadNode* sib = graph_.sibling(node.id);
      const double here = node.lateral_offset(sp.lane_id);
      const double far = here < 0.0 ? (sib ? sib->total_width() : 0.0) + 1.0 : -node.total_width() - 1.0;
      walk_to(node.offset_pose(far, sp.s));
      a.waiting = true;
      break;
    }
    case ActionKind::OnSidewalk:
      a.mode = Mode::Route;
      a.walker = true;
      detail::append_lane(a.route, node, sp.lane_id, sp.s, std::min(node.length, sp.s + config_.walk_length_m));
      break;
  }
}

void Simulation::add_agent(std::unique_ptr<Agent> a) { agents_.push_back(std::move(a)); }

void Simulation::finish_setup() {
  // Unprotected left turns yield to crossing routes from other approaches.
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    Agent& a = *agents_[i];
    if (a.mode != Mode::Route || a.walker || a.plan.action != ActionKind::TurnLeft ||
        a.plan.behavior == Behavior::Aggressive)
      continue;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
      const Agent& b = *agents_[j];
      if (i == j || b.mode != Mode::Route || b.walker || b.done) continue;
      if (b.route.where(0).road == a.route.where(0).road) continue;
      const double reach = (a.fp.width + b.fp.width) / 2.0 + 0.5;
      const auto& pa = a.route.points();
      const auto& pb = b.route.points();
      bool found = false;
      for (std::size_t x = 0; x < pa.size() && !found; ++x)
        for (std::size_t y = 0; y < pb.size(); ++y)
          if (std::hypot(pa[x].x - pb[y].x, pa[x].y - pb[y].y) < reach) {
            a.conflicts.push_back({j, a.route.cum()[x], b.route.cum()[y]});
            found = true;
            break;
          }
    }
  }
  // Two left-turners facing each other: the earlier one goes first.
  for (std::size_t i = 0; i < agents_.size(); ++i)
    std::erase_if(agents_[i]->conflicts, [&](const Agent::Conflict& c) {
      if (c.other > i) return false;
      return std::ranges::any_of(agents_[c.other]->conflicts, [&](const Agent::Conflict& o) { return o.other == i; });
    });
  for (auto& a : agents_) a->sync();
  frame_.tick = 0;
  frame_.t = 0.0;
  refresh_frame();
}

void Simulation::refresh_frame() {
  frame_.agents.clear();
  for (const auto& a : agents_)
    frame_.agents.push_back(
        {a->id, a->plan.type, a->plan.action, a->pose, a->speed, a->done, a->road, a->lane_id, a->s});
}

bool Simulation::all_done() const {
  return std::ranges::all_of(agents_, [](const auto& a) { return a->done; });
}

void Simulation::set_speed(std::size_t agent, double speed) {
  agents_.at(agent)->speed = speed;
  refresh_frame();
}

namespace {

struct Leader {
  double gap = 1e300;
  double speed = 0.0;
  std::size_t index = 0;
  bool found = false;
};

}  // namespace

void Simulation::step(double dt) {
  if (dt <= 0.0) throw std::invalid_argument("step requires dt > 0");
  const Frame before = frame_;
  const Agent& ego = *agents_[ego_];
  const AgentState& ego_state = before.agents[ego_];

  auto leader_of = [&](std::size_t i) {
    const Agent& a = *agents_[i];
    const AgentState& me = before.agents[i];
    const double c = std::cos(me.pose.heading), sn = std::sin(me.pose.heading);
    Leader best;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
      const Agent& b = *agents_[j];
      if (j == i || !b.present()) continue;
      const AgentState& other = before.agents[j];
      const double rx = other.pose.x - me.pose.x, ry = other.pose.y - me.pose.y;
      const double lon = rx * c + ry * sn;
      const double lat = -rx * sn + ry * c;
      if (lon <= 0.0 || lon > kLookAhead) continue;
      if (std::abs(lat) >= (a.fp.width + b.fp.width) / 2.0 + kCorridorMargin) continue;
      const double cos_dh = std::cos(other.pose.heading - me.pose.heading);
      const bool aligned = cos_dh > 0.5;
      const bool walker_ahead = !b.vehicle() && a.plan.behavior != Behavior::Aggressive;
      if (!aligned && other.speed >= 0.1 && !walker_ahead) continue;
      const double gap = lon - (a.fp.length + b.fp.length) / 2.0;
      if (gap < best.gap) best = {gap, aligned ? other.speed * cos_dh : 0.0, j, true};
    }
    return best;
  };

  auto follow_speed = [&](const Agent& a, const Leader& l, double brake) {
    if (!l.found) return 1e300;
    return safe_speed(l.gap - a.profile.safe_distance + l.speed * l.speed / (2.0 * brake), brake, dt);
  };

  auto limit = [&](const Agent& a, double desired, double brake) {
    return std::clamp(desired, std::max(0.0, a.speed - brake * dt), a.speed + a.profile.max_accel * dt);
  };

  auto blocked_by_parked = [&](const Leader& l) {
    return l.found && agents_[l.index]->done && agents_[l.index]->parked;
  };

  for (std::size_t i = 0; i < agents_.size(); ++i) {
    Agent& a = *agents_[i];
    if (a.done || a.mode == Mode::Static) continue;
    const double brake = a.profile.max_brake * friction_;

    if (a.walker) {
      if (a.waiting) {
        const double dist = std::hypot(ego_state.pose.x - a.pose.x, ego_state.pose.y - a.pose.y);
        if (dist <= config_.trigger_distance_m || ego.done) a.waiting = false;
      }
      if (a.waiting) continue;
      a.speed = walk_speed(a.plan.behavior, config_);
      a.d = std::min(a.route.length(), a.d + a.speed * dt);
      if (a.d >= a.route.length()) {
        a.done = true;
        a.speed = 0.0;
      }
      a.sync();
      continue;
    }

    const Leader lead = leader_of(i);
    double desired = std::min(a.target_speed(), follow_speed(a, lead, brake));

    if (a.mode == Mode::Route) {
      for (const auto& c : a.conflicts) {
        const Agent& b = *agents_[c.other];
        if (b.done) continue;
        const double stop = c.d_self - a.fp.length / 2.0 - kYieldMargin;
        if (a.d > stop + 0.3 || c.d_self - a.d > kYieldRange) continue;
        if (b.d - b.fp.length / 2.0 > c.d_other + a.fp.width / 2.0 + 1.0) continue;
        const double dist = c.d_other - b.d - b.fp.length / 2.0 - a.fp.width / 2.0;
        const double eta = arrival_time(dist, b.speed, b.profile.max_accel, b.target_speed());
        if (eta > kYieldHorizon_s) continue;
        desired = std::min(desired, safe_speed(stop - a.d, brake, dt));
      }
      a.speed = limit(a, desired, brake);
      a.d = std::min(a.route.length(), a.d + a.speed * dt);
      a.sync();
      if (a.d >= a.route.length()) {
        a.done = true;
        a.speed = 0.0;
      } else if (a.speed < kStationary && blocked_by_parked(lead)) {
        a.done = true;
        a.parked = true;
        a.speed = 0.0;
      }
      continue;
    }

    // Lateral mode: lane change or blocking vehicle.
    const double maneuver = config_.maneuver_length_m;
    if (a.blocker) {
      const bool same_road = ego_state.road == a.node->id;
      double lat_target = a.lat;
      if (same_road && a.node->find_lane(ego_state.lane_id)) lat_target = a.node->lateral_offset(ego_state.lane_id);
      const double hold = same_road ? ego_state.s + a.hold_offset : a.s;
      const double track = std::max(0.0, ego_state.speed + 0.8 * (hold - a.s));
      desired = std::min({desired, track, std::max(a.target_speed(), ego_state.speed)});
      a.speed = limit(a, desired, brake);
      const double end = a.node->length - a.fp.length / 2.0;
      a.s = std::min(std::max(end, a.s), a.s + a.speed * dt);
      if (a.s >= end) a.speed = 0.0;
      const double width = std::abs(a.lat_to - a.lat_from) > 0.0 ? std::abs(a.lat_to - a.lat_from) : 3.5;
      const double rate = width * std::max(a.speed, kMinManeuverSpeed) * dt / maneuver;
      a.lat += std::clamp(lat_target - a.lat, -rate, rate);
      a.sync();
      const bool ego_still =
          ego.done || (ego_state.speed < kStationary && (ego.mode != Mode::Lateral || ego.progress >= 1.0));
      if (a.speed < kStationary && std::abs(lat_target - a.lat) < 0.05 && ego_still) {
        a.done = true;
        a.parked = true;
        a.speed = 0.0;
      }
      continue;
    }

    a.speed = limit(a, desired, brake);
    const double ds = a.speed * dt;
    a.s = std::min(a.node->length, a.s + ds);
    a.progress = std::min(1.0, a.progress + std::max(ds, kMinManeuverSpeed * dt) / maneuver);
    a.lat = a.lat_from + (a.lat_to - a.lat_from) * smoothstep(a.progress);
    a.sync();
    if (a.progress >= 1.0) {
      a.done = true;
      a.speed = 0.0;
    }
  }
  frame_.tick += 1;
  frame_.t = frame_.tick * dt;
  refresh_frame();
}

std::vector<std::pair<std::string, std::string>> Simulation::collisions() const {
  std::vector<std::pair<std::string, std::string>> out;
  auto box = [](const Agent& a) { return detail::Box{a.pose.x, a.pose.y, a.pose.heading, a.fp.length, a.fp.width}; };
  for (std::size_t i = 0; i < agents_.size(); ++i)
    for (std::size_t j = i + 1; j < agents_.size(); ++j) {
      const Agent& a = *agents_[i];
      const Agent& b = *agents_[j];
      if (!a.present() || !b.present()) continue;
      if (a.done && b.done) continue;
      if (!a.vehicle() && !b.vehicle()) continue;
      if (detail::overlaps(box(a), box(b))) out.emplace_back(a.id, b.id);
    }
  return out;
}

namespace {

Scene run(Simulation& sim, Provenance provenance, const SimConfig& config, bool allow_zero_steps) {
  Scene scene;
  scene.provenance = std::move(provenance);
  scene.frames.push_back(sim.frame());
  if (allow_zero_steps && sim.all_done()) return scene;
  const int max_ticks = static_cast<int>(std::ceil(config.timeout_s / config.dt - 1e-9));
  while (true) {
    sim.step(config.dt);
    scene.frames.push_back(sim.frame());
    if (auto hits = sim.collisions(); !hits.empty()) {
      scene.outcome = {OutcomeKind::Collision, std::move(hits)};
      break;
    }
    if (sim.all_done()) {
      scene.outcome = {OutcomeKind::Completed, {}};
      break;
    }
    if (sim.frame().tick >= max_ticks) {
      scene.outcome = {OutcomeKind::TimedOut, {}};
      break;
    }
  }
  return scene;
}

}  // namespace

const AgentState& Frame::agent(const std::string& id) const {
  for (const auto& a : agents)
    if (a.id == id) return a;
  throw NotFoundError("no agent " + id + " in frame " + std::to_string(tick));
}

std::string_view to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Completed: return "completed";
    case OutcomeKind::TimedOut: return "timed_out";
    case OutcomeKind::Collision: return "collision";
  }
  return "completed";
}

Scene render_scene(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan, const SimConfig& config) {
  Simulation sim(graph, road, plan, config);
  Provenance p;
  p.plan = plan;
  p.road = road;
  p.seed = config.seed;
  for (const auto& a : sim.frame().agents) p.agent_ids.push_back(a.id);
  return run(sim, std::move(p), config, false);
}

Scene render_scene(const RoadGraph& graph, const RankedSelection& selection, const ScenePlan& plan,
                   const SimConfig& config) {
  Scene scene = render_scene(graph, selection.chosen, plan, config);
  scene.provenance.selection = selection;
  return scene;
}

Scene continue_sequence(const RoadGraph& graph, const Scene& previous, const ScenePlan& plan,
                        const SimConfig& config) {
  if (previous.frames.empty()) throw std::invalid_argument("previous scene has no frames");
  const Frame& last = previous.final_frame();
  const AgentState& prev_ego = last.agent("ego");
  const std::size_t ego_index = plan.ego_index();
  if (!graph.contains(prev_ego.road) || graph.node(prev_ego.road).is_junction)
    throw SpawnError("the ego ends inside a junction and cannot anchor a new scene", static_cast<int>(ego_index));

  const SpawnSolution spawn =
      solve_spawns(graph, prev_ego.road, plan, config, EgoAnchor{prev_ego.road, prev_ego.lane_id, prev_ego.s});

  int next = 0;
  for (const auto& a : last.agents)
    if (a.id.size() > 1 && a.id[0] == 'a') next = std::max(next, std::stoi(a.id.substr(1)) + 1);

  Simulation sim(graph, config);
  sim.friction_ = plan.env.weather.friction();
  sim.ego_ = ego_index;
  SpawnedAgent ego_spawn = spawn.agents[ego_index];
  Provenance p;
  p.plan = plan;
  p.road = prev_ego.road;
  p.seed = config.seed;
  p.prompt = previous.provenance.prompt;
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    auto a = std::make_unique<Simulation::Agent>();
    a->id = i == ego_index ? std::string("ego") : "a" + std::to_string(next++);
    sim.build_agent(*a, plan.agents[i], spawn.agents[i], ego_spawn, static_cast<int>(i));
    p.agent_ids.push_back(a->id);
    sim.add_agent(std::move(a));
  }
  for (const auto& st : last.agents) {
    if (st.id == "ego") continue;
    auto a = std::make_unique<Simulation::Agent>();
    a->id = st.id;
    a->plan.type = st.type;
    a->plan.action = st.action;
    a->fp = footprint(st.type);
    a->mode = Mode::Static;
    a->done = true;
    a->parked = true;
    a->pose = st.pose;
    a->road = st.road;
    a->lane_id = st.lane_id;
    a->s = st.s;
    p.agent_ids.push_back(a->id);
    sim.add_agent(std::move(a));
  }
  sim.finish_setup();
  // Frame 0 repeats the ego's final pose exactly.
  Simulation::Agent& ego = *sim.agents_[ego_index];
  ego.pose = prev_ego.pose;
  sim.refresh_frame();
  return run(sim, std::move(p), config, true);
}

}  // namespace scenegen
