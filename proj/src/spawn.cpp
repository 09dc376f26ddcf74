#include <algorithm>
#include <cmath>
#include <map>

#include "scenegen/errors.hpp"
#include "scenegen/simulator.hpp"

namespace scenegen {

BehaviorProfile default_profile(Behavior b) {
  switch (b) {
    case Behavior::Cautious: return {5.0, 10.0, 1.5, 4.0};
    case Behavior::Normal: return {8.0, 6.0, 2.5, 6.0};
    case Behavior::Aggressive: return {12.0, 3.0, 4.0, 8.0};
  }
  return {};
}

Footprint footprint(AgentType t) {
  switch (t) {
    case AgentType::Car: return {4.5, 1.8};
    case AgentType::Police: return {4.8, 1.9};
    case AgentType::Ambulance: return {6.0, 2.2};
    case AgentType::Firetruck: return {8.0, 2.5};
    case AgentType::Bus: return {12.0, 2.55};
    case AgentType::Truck: return {8.0, 2.5};
    case AgentType::Motorcycle: return {2.2, 0.8};
    case AgentType::Cyclist: return {1.8, 0.6};
    case AgentType::Pedestrian: return {0.5, 0.5};
  }
  return {};
}

std::string agent_id(const ScenePlan& plan, std::size_t index) {
  return plan.agents.at(index).is_ego ? std::string("ego") : "a" + std::to_string(index);
}

namespace {

int rank_of(RelativePosition p) {
  if (is_ahead(p)) return 0;
  if (is_behind(p)) return 2;
  return 1;
}

struct Member {
  std::size_t index = 0;
  int rank = 1;
  int pos_id = 0;
  double length = 0.0;
  double safe = 0.0;
  std::optional<double> distance;
  double offset = 0.0;  // ego-frame progress relative to the ego, or distance to the junction
};

struct Chain {
  const RoadNode* node = nullptr;
  int lane_id = 0;
  bool mirrored = false;   // lane runs against the ego's travel direction
  bool to_junction = false;  // members measured by distance to the junction
  std::vector<Member> members;
};

class Solver {
 public:
  Solver(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan, const SimConfig& config,
         const std::optional<EgoAnchor>& anchor)
      : graph_(graph), node_(graph.node(road)), plan_(plan), config_(config), anchor_(anchor) {}

  SpawnSolution solve() {
    ego_ = static_cast<int>(plan_.ego_index());
    drive_ = node_.lanes_of(LaneKind::Driving);
    if (drive_.empty()) throw SpawnError("road " + node_.id + " has no driving lane", ego_);
    choose_ego_lane();
    for (std::size_t i = 0; i < plan_.agents.size(); ++i) assign(i);
    place_ego_road();
    for (auto& [key, chain] : adjacent_) place_adjacent(chain);

    SpawnSolution out;
    out.agents.resize(plan_.agents.size());
    auto emit = [&](const Chain& c, const Member& m, double s) {
      SpawnedAgent& a = out.agents[m.index];
      a.id = agent_id(plan_, m.index);
      a.road = c.node->id;
      a.lane_id = c.lane_id;
      a.s = s;
      a.pose = c.node->lane_pose(c.lane_id, s);
    };
    for (auto& [key, c] : ego_road_)
      for (const Member& m : c.members) {
        const double u = ego_u_ + m.offset;
        emit(c, m, c.mirrored ? c.node->length - u : u);
      }
    for (auto& [key, c] : adjacent_)
      for (const Member& m : c.members) emit(c, m, c.mirrored ? m.offset : c.node->length - m.offset);
    return out;
  }

 private:
  Member member(std::size_t i) const {
    const AgentPlan& a = plan_.agents[i];
    const Footprint f = footprint(a.type);
    Member m;
    m.index = i;
    m.rank = a.is_ego ? 1 : rank_of(a.relative_to_ego);
    m.pos_id = a.pos_id;
    m.length = f.length;
    m.safe = is_pedestrian(a.type) ? 1.0 : config_.profiles.at(a.behavior).safe_distance;
    m.distance = a.distance;
    return m;
  }

  bool on_ego_road(std::size_t i) const {
    const AgentPlan& a = plan_.agents[i];
    return a.is_ego || !(is_adjacent_road(a.relative_to_ego) || is_oncoming(plan_, i));
  }

  void choose_ego_lane() {
    ego_lane_index_ = 0;
    if (anchor_) {
      for (std::size_t k = 0; k < drive_.size(); ++k)
        if (drive_[k]->lane_id == anchor_->lane_id) ego_lane_index_ = static_cast<int>(k);
      return;
    }
    for (std::size_t i = 0; i < plan_.agents.size(); ++i) {
      const AgentPlan& a = plan_.agents[i];
      if (!a.is_ego && on_ego_road(i) && a.road_type == LaneKind::Driving && is_left_side(a.relative_to_ego) &&
          drive_.size() > 1)
        ego_lane_index_ = 1;
    }
  }

  void add(std::map<std::pair<RoadId, int>, Chain>& chains, const RoadNode& node, int lane, bool mirrored,
           bool to_junction, std::size_t i) {
    Chain& c = chains[{node.id, lane}];
    c.node = &node;
    c.lane_id = lane;
    c.mirrored = mirrored;
    c.to_junction = to_junction;
    c.members.push_back(member(i));
  }

  static const Lane* outermost(const RoadNode* n, LaneKind kind) {
    if (!n) return nullptr;
    const auto lanes = n->lanes_of(kind);
    return lanes.empty() ? nullptr : lanes.back();
  }

  void assign(std::size_t i) {
    const AgentPlan& a = plan_.agents[i];
    const int idx = static_cast<int>(i);
    const RelativePosition rel = a.relative_to_ego;
    if (on_ego_road(i)) {
      if (a.is_ego || a.road_type == LaneKind::Driving) {
        int k = ego_lane_index_;
        if (!a.is_ego && is_left_side(rel)) k -= 1;
        if (!a.is_ego && is_right_side(rel)) k += 1;
        if (k < 0 || k >= static_cast<int>(drive_.size()))
          throw SpawnError("no driving lane " + std::string(is_left_side(rel) ? "left" : "right") +
                               " of the ego on road " + node_.id,
                           idx);
        add(ego_road_, node_, drive_[static_cast<std::size_t>(k)]->lane_id, false, false, i);
        return;
      }
      const RoadNode* sib = graph_.sibling(node_.id);
      if (is_left_side(rel) && outermost(sib, a.road_type)) {
        add(ego_road_, *sib, outermost(sib, a.road_type)->lane_id, true, false, i);
      } else if (const Lane* l = outermost(&node_, a.road_type)) {
        add(ego_road_, node_, l->lane_id, false, false, i);
      } else if (const Lane* l2 = outermost(sib, a.road_type)) {
        add(ego_road_, *sib, l2->lane_id, true, false, i);
      } else {
        throw SpawnError("road " + node_.id + " has no " + std::string(to_string(a.road_type)) + " lane", idx);
      }
      return;
    }

    const Turn via = is_oncoming(plan_, i)                        ? Turn::Straight
                     : rel == RelativePosition::RoadOfLeftTurn ? Turn::Left
                                                                  : Turn::Right;
    const auto exits = neighbors(graph_, node_.id, via);
    if (exits.empty())
      throw SpawnError("road " + node_.id + " has no " + std::string(to_string(via)) + " neighbour", idx);
    const RoadNode* exit = exits.front();
    const RoadNode* approach = graph_.sibling(exit->id);
    if (a.road_type == LaneKind::Driving) {
      const auto lanes = approach ? approach->lanes_of(LaneKind::Driving) : std::vector<const Lane*>{};
      if (lanes.empty()) throw SpawnError("no approach lane on the road of " + exit->id, idx);
      const Lane* lane = a.action == ActionKind::TurnRight ? lanes.back() : lanes.front();
      add(adjacent_, *approach, lane->lane_id, false, true, i);
    } else if (const Lane* l = outermost(exit, a.road_type)) {
      add(adjacent_, *exit, l->lane_id, true, true, i);
    } else if (const Lane* l2 = outermost(approach, a.road_type)) {
      add(adjacent_, *approach, l2->lane_id, false, true, i);
    } else {
      throw SpawnError("road " + exit->id + " has no " + std::string(to_string(a.road_type)) + " lane", idx);
    }
  }

  double separation(const Member& front, const Member& back, const Member& measured) const {
    const double min_sep = (front.length + back.length) / 2.0;
    if (measured.distance) {
      if (min_sep + 0.5 > *measured.distance)
        throw SpawnError("distance " + std::to_string(*measured.distance) + " m is too short",
                         static_cast<int>(measured.index));
      return *measured.distance;
    }
    return std::max(config_.gap_m, min_sep + back.safe);
  }

  static void sort_members(Chain& c) {
    std::stable_sort(c.members.begin(), c.members.end(), [](const Member& a, const Member& b) {
      if (a.rank != b.rank) return a.rank < b.rank;
      return a.pos_id < b.pos_id;
    });
  }

  void place_ego_road() {
    const double len = node_.length;
    for (auto& [key, c] : ego_road_) {
      sort_members(c);
      auto& m = c.members;
      const auto pivot_it = std::ranges::find_if(m, [](const Member& x) { return x.rank == 1; });
      if (pivot_it != m.end()) {
        const std::size_t p = static_cast<std::size_t>(pivot_it - m.begin());
        m[p].offset = 0.0;
        for (std::size_t j = p; j-- > 0;) m[j].offset = m[j + 1].offset + separation(m[j], m[j + 1], m[j]);
        for (std::size_t j = p + 1; j < m.size(); ++j)
          m[j].offset = m[j - 1].offset - separation(m[j - 1], m[j], m[j]);
      } else {
        const std::size_t first_back = static_cast<std::size_t>(
            std::ranges::find_if(m, [](const Member& x) { return x.rank == 2; }) - m.begin());
        for (std::size_t j = first_back; j-- > 0;)
          m[j].offset = j + 1 == first_back ? m[j].distance.value_or(config_.gap_m)
                                            : m[j + 1].offset + separation(m[j], m[j + 1], m[j]);
        for (std::size_t j = first_back; j < m.size(); ++j)
          m[j].offset = j == first_back ? -m[j].distance.value_or(config_.gap_m)
                                        : m[j - 1].offset - separation(m[j - 1], m[j], m[j]);
      }
    }

    order_across_lanes();

    if (anchor_) {
      ego_u_ = anchor_->s;
      for (auto& [key, c] : ego_road_)
        for (const Member& m : c.members) {
          if (static_cast<int>(m.index) == ego_) continue;
          const double u = ego_u_ + m.offset;
          if (u - m.length / 2 < 0.0 || u + m.length / 2 > len)
            throw SpawnError("does not fit on road " + node_.id, static_cast<int>(m.index));
        }
      return;
    }

    double lo = 0.0, hi = len;
    const Member* worst = nullptr;
    for (auto& [key, c] : ego_road_)
      for (const Member& m : c.members) {
        lo = std::max(lo, -m.offset + m.length / 2);
        hi = std::min(hi, len - m.offset - m.length / 2);
        if (static_cast<int>(m.index) != ego_ && (!worst || std::abs(m.offset) > std::abs(worst->offset)))
          worst = &m;
      }
    if (lo > hi) {
      const int who = worst ? static_cast<int>(worst->index) : ego_;
      throw SpawnError("road " + node_.id + " is too short for the planned agents", who);
    }
    ego_u_ = std::clamp(len / 2.0, lo, hi);
  }

  // pos_id orders agents ahead of (or behind) the ego across lanes too: a
  // smaller pos_id starts clear of every larger one on the same side.
  void order_across_lanes() {
    struct Ref {
      Chain* chain;
      std::size_t j;
    };
    std::vector<Ref> side;
    for (auto& [key, c] : ego_road_)
      for (std::size_t j = 0; j < c.members.size(); ++j)
        if (c.members[j].rank != 1) side.push_back({&c, j});
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      auto raise = [&](Member& m, double want, bool ahead) {
        if (ahead ? m.offset < want - 1e-9 : m.offset > want + 1e-9) {
          m.offset = want;
          changed = true;
        }
      };
      for (auto& [key, c] : ego_road_) {
        auto& m = c.members;
        for (std::size_t j = 0; j + 1 < m.size(); ++j) {
          if (m[j].rank == 0 && m[j + 1].rank <= 1)
            raise(m[j], m[j + 1].offset + separation(m[j], m[j + 1], m[j]), true);
          if (m[j + 1].rank == 2 && m[j].rank >= 1)
            raise(m[j + 1], m[j].offset - separation(m[j], m[j + 1], m[j + 1]), false);
        }
      }
      for (const Ref& a : side)
        for (const Ref& b : side) {
          if (a.chain == b.chain) continue;
          Member& ma = a.chain->members[a.j];
          const Member& mb = b.chain->members[b.j];
          if (ma.rank != mb.rank || ma.pos_id >= mb.pos_id) continue;
          const double clear = (ma.length + mb.length) / 2.0 + 0.5;
          if (ma.rank == 0) raise(ma, mb.offset + clear, true);
        }
      for (const Ref& b : side)
        for (const Ref& a : side) {
          if (a.chain == b.chain) continue;
          const Member& ma = a.chain->members[a.j];
          Member& mb = b.chain->members[b.j];
          if (ma.rank != mb.rank || ma.pos_id >= mb.pos_id) continue;
          const double clear = (ma.length + mb.length) / 2.0 + 0.5;
          if (mb.rank == 2) raise(mb, ma.offset - clear, false);
        }
      if (!changed) return;
    }
  }

  void place_adjacent(Chain& c) {
    sort_members(c);
    const double len = c.node->length;
    const double ego_to_junction = node_.length - ego_u_;
    auto& m = c.members;
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (j == 0) {
        if (m[j].distance) {
          m[j].offset = *m[j].distance;
        } else {
          const double want = c.mirrored ? std::min(12.0, len / 2.0) : ego_to_junction;
          const double half = m[j].length / 2.0;
          m[j].offset = half <= len - half ? std::clamp(want, half, len - half) : want;
        }
      } else {
        m[j].offset = m[j - 1].offset + separation(m[j - 1], m[j], m[j]);
      }
    }
    // slide a queue without an explicit lead distance towards the junction
    if (!m.empty() && !m.front().distance) {
      const double overflow = m.back().offset + m.back().length / 2 - len;
      const double slack = m.front().offset - m.front().length / 2;
      if (overflow > 0.0 && slack > 0.0)
        for (auto& x : m) x.offset -= std::min(overflow, slack);
    }
    for (const auto& x : m)
      if (x.offset - x.length / 2 < 0.0 || x.offset + x.length / 2 > len)
        throw SpawnError("does not fit on road " + c.node->id, static_cast<int>(x.index));
  }

  const RoadGraph& graph_;
  const RoadNode& node_;
  const ScenePlan& plan_;
  const SimConfig& config_;
  std::optional<EgoAnchor> anchor_;
  int ego_ = 0;
  std::vector<const Lane*> drive_;
  int ego_lane_index_ = 0;
  double ego_u_ = 0.0;
  std::map<std::pair<RoadId, int>, Chain> ego_road_;
  std::map<std::pair<RoadId, int>, Chain> adjacent_;
};

}  // namespace

SpawnSolution solve_spawns(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan,
                           const SimConfig& config, const std::optional<EgoAnchor>& anchor) {
  return Solver(graph, road, plan, config, anchor).solve();
}

SpawnSolution solve_spawns(const RoadGraph& graph, const RankedSelection& selection, const ScenePlan& plan,
                           const SimConfig& config) {
  return solve_spawns(graph, selection.chosen, plan, config);
}

}  // namespace scenegen
