#include "scenegen/ranker.hpp"

#include <algorithm>
#include <random>

namespace scenegen {

using nlohmann::json;

namespace {

std::string describe(const ConditionSet& c) { return to_json(c).dump(); }

}  // namespace

NoCandidateError::NoCandidateError(ConditionSet c)
    : Error("no road on this map satisfies " + describe(c)), conditions(std::move(c)) {}

bool road_matches(const RoadNode& road, const ConditionSet& c) {
  if (road.is_junction) return false;
  const int driving = road.driving_lane_count();
  if (driving < 1 || driving < c.number_of_lanes) return false;
  for (auto s : c.required_signals)
    if (!road.has_signal(s)) return false;
  for (const auto& o : c.required_objects)
    if (!road.has_object(o)) return false;
  for (auto s : c.without_signals)
    if (road.has_signal(s)) return false;
  for (const auto& o : c.without_objects)
    if (road.has_object(o)) return false;
  return true;
}

CandidateSet retrieve_candidates(const RoadGraph& graph, const ConditionSet& conditions) {
  if (graph.nodes().empty()) throw std::invalid_argument("road graph is empty");
  CandidateSet out{{}, conditions};
  for (const auto& [id, node] : graph.nodes())
    if (road_matches(node, conditions)) out.roads.push_back(id);
  if (out.roads.empty()) throw NoCandidateError(conditions);
  return out;
}

namespace {

std::string turn_name(Turn t) {
  switch (t) {
    case Turn::Left: return "L. Turn";
    case Turn::Right: return "R. Turn";
    case Turn::Straight: return "Straight";
  }
  return "Straight";
}

std::string lane_name(LaneKind k) { return k == LaneKind::Shoulder ? "Shoulder" : "Sidewalk"; }

std::string capacity_name(int n) {
  static const char* words[] = {"Zero", "One", "Two", "Three", "Four", "Five", "Six",
                                "Seven", "Eight", "Nine", "Ten", "Eleven", "Twelve"};
  const std::string count = n < 13 ? words[n] : std::to_string(n);
  return count + (n == 1 ? " Car" : " Cars");
}

bool on_ego_road(const ScenePlan& plan, std::size_t i) {
  return !is_adjacent_road(plan.agents[i].relative_to_ego) && !is_oncoming(plan, i);
}

std::optional<Turn> action_turn(ActionKind a) {
  if (a == ActionKind::TurnLeft) return Turn::Left;
  if (a == ActionKind::TurnRight) return Turn::Right;
  if (a == ActionKind::GoStraight) return Turn::Straight;
  return std::nullopt;
}

struct Capacity {
  int vehicles = 0;     // non-ego vehicles anywhere in the plan
  int lanes_needed = 1;  // ego lane plus occupied side columns
  int same_road = 0;    // driving-lane vehicles on the ego road, ego included
};

Capacity capacity_of(const ScenePlan& plan) {
  Capacity c;
  bool left = false;
  bool right = false;
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const AgentPlan& a = plan.agents[i];
    if (is_pedestrian(a.type)) continue;
    if (!a.is_ego) ++c.vehicles;
    if (a.road_type != LaneKind::Driving || !on_ego_road(plan, i)) continue;
    ++c.same_road;
    left |= is_left_side(a.relative_to_ego);
    right |= is_right_side(a.relative_to_ego);
  }
  c.lanes_needed = 1 + (left ? 1 : 0) + (right ? 1 : 0);
  return c;
}

}  // namespace

std::vector<Check> derive_checks(const ScenePlan& plan) {
  std::vector<Check> out;
  auto add = [&](Check c) {
    if (std::ranges::none_of(out, [&](const Check& e) { return e.name == c.name; })) out.push_back(std::move(c));
  };
  auto turn_check = [](Turn t) { return Check{turn_name(t), CheckKind::TurnOption, t, LaneKind::Driving, std::nullopt}; };

  for (std::size_t i = 0; i < plan.agents.size(); ++i)
    if (on_ego_road(plan, i))
      if (auto t = action_turn(plan.agents[i].action)) add(turn_check(*t));

  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const AgentPlan& a = plan.agents[i];
    if (a.road_type == LaneKind::Driving) continue;
    Check c{lane_name(a.road_type), CheckKind::LaneKindPresent, Turn::Straight, a.road_type, std::nullopt};
    if (a.relative_to_ego == RelativePosition::RoadOfLeftTurn) {
      c.name = "L. Road " + c.name;
      c.via = Turn::Left;
    } else if (a.relative_to_ego == RelativePosition::RoadOfRightTurn) {
      c.name = "R. Road " + c.name;
      c.via = Turn::Right;
    } else if (is_oncoming(plan, i)) {
      c.name = "Opp. Road " + c.name;
      c.via = Turn::Straight;
    }
    add(c);
  }

  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const AgentPlan& a = plan.agents[i];
    if (a.relative_to_ego == RelativePosition::RoadOfLeftTurn) add(turn_check(Turn::Left));
    if (a.relative_to_ego == RelativePosition::RoadOfRightTurn) add(turn_check(Turn::Right));
    if (is_oncoming(plan, i)) add(turn_check(Turn::Straight));
  }

  // Where the agent's path leaves the junction, relative to the ego approach.
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const AgentPlan& a = plan.agents[i];
    const auto t = action_turn(a.action);
    if (!t) continue;
    std::optional<Turn> exit;
    if (a.relative_to_ego == RelativePosition::RoadOfLeftTurn) {
      if (*t == Turn::Left) exit = Turn::Straight;
      if (*t == Turn::Straight) exit = Turn::Right;
    } else if (a.relative_to_ego == RelativePosition::RoadOfRightTurn) {
      if (*t == Turn::Right) exit = Turn::Straight;
      if (*t == Turn::Straight) exit = Turn::Left;
    } else if (is_oncoming(plan, i)) {
      if (*t == Turn::Right) exit = Turn::Left;
      if (*t == Turn::Left) exit = Turn::Right;
    }
    if (exit) add(turn_check(*exit));
  }

  const Capacity cap = capacity_of(plan);
  if (cap.vehicles >= 1) add(Check{capacity_name(cap.vehicles), CheckKind::Capacity, Turn::Straight, LaneKind::Driving, std::nullopt});
  return out;
}

bool offers_turn(const RoadNode& road, Turn turn) {
  if (road.junction_options.empty()) return turn == Turn::Straight;
  return road.junction_options.contains(turn);
}

bool evaluate_check(const RoadGraph& graph, const RoadNode& road, const Check& check, const ScenePlan& plan,
                    const RankerOptions& options) {
  switch (check.kind) {
    case CheckKind::TurnOption: return offers_turn(road, check.turn);
    case CheckKind::LaneKindPresent: {
      if (!check.via) return road.has_lane_kind(check.lane);
      for (const RoadNode* n : neighbors(graph, road.id, *check.via)) {
        if (n->has_lane_kind(check.lane)) return true;
        if (const RoadNode* s = graph.sibling(n->id); s && s->has_lane_kind(check.lane)) return true;
      }
      return false;
    }
    case CheckKind::Capacity: {
      const Capacity cap = capacity_of(plan);
      return cap.lanes_needed <= road.driving_lane_count() &&
             road.length >= static_cast<double>(cap.same_road) * options.vehicle_gap_m;
    }
  }
  return false;
}

RoadScore score_road(const RoadGraph& graph, const RoadId& id, const ScenePlan& plan, const RankerOptions& options) {
  const RoadNode& road = graph.node(id);
  RoadScore s;
  for (const Check& c : derive_checks(plan)) {
    const bool ok = evaluate_check(graph, road, c, plan, options);
    s.per_check.emplace_back(c.name, ok);
    s.total += ok ? 1 : 0;
  }
  return s;
}

int RankedSelection::best_total() const {
  int best = 0;
  for (const auto& [id, s] : scores) best = std::max(best, s.total);
  return best;
}

std::vector<RoadId> RankedSelection::argmax() const {
  const int best = best_total();
  std::vector<RoadId> out;
  for (const auto& [id, s] : scores)
    if (s.total == best) out.push_back(id);
  return out;
}

std::size_t seeded_pick(std::uint64_t seed, std::size_t n) {
  if (n == 0) throw std::invalid_argument("seeded_pick from an empty set");
  // splitmix64 finaliser so nearby seeds start far apart
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::mt19937_64 rng(z);
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

RankedSelection rank_and_select(const RoadGraph& graph, const CandidateSet& candidates, const ScenePlan& plan,
                                std::uint64_t seed, const RankerOptions& options) {
  if (candidates.roads.empty()) throw NoCandidateError(candidates.conditions);
  RankedSelection out;
  out.seed = seed;
  for (const Check& c : derive_checks(plan)) out.checks.push_back(c.name);
  for (const RoadId& id : candidates.roads) out.scores.emplace_back(id, score_road(graph, id, plan, options));
  const auto best = out.argmax();
  out.chosen = best[seeded_pick(seed, best.size())];
  return out;
}

json to_json(const RankedSelection& s) {
  json scores = json::object();
  for (const auto& [id, score] : s.scores) {
    json per = json::object();
    for (const auto& [name, ok] : score.per_check) per[name] = ok;
    scores[id] = {{"total", score.total}, {"per_check", per}};
  }
  json order = json::array();
  for (const auto& [id, score] : s.scores) order.push_back(id);
  return {{"checks", s.checks}, {"candidates", order}, {"scores", scores}, {"chosen", s.chosen}, {"seed", s.seed}};
}

RankedSelection selection_from_json(const json& j) {
  try {
    RankedSelection s;
    s.checks = j.at("checks").get<std::vector<std::string>>();
    s.chosen = j.at("chosen").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& id : j.at("candidates")) {
      const json& entry = j.at("scores").at(id.get<std::string>());
      RoadScore score;
      score.total = entry.at("total").get<int>();
      for (const auto& name : s.checks) score.per_check.emplace_back(name, entry.at("per_check").at(name).get<bool>());
      s.scores.emplace_back(id.get<std::string>(), score);
    }
    return s;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("bad ranked selection: ") + e.what());
  }
}

}  // namespace scenegen
