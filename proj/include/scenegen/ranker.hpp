#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scenegen/road_graph.hpp"
#include "scenegen/schema.hpp"

namespace scenegen {

struct NoCandidateError : Error {
  explicit NoCandidateError(ConditionSet conditions);
  ConditionSet conditions;
};

struct CandidateSet {
  std::vector<RoadId> roads;
  ConditionSet conditions;
};

bool road_matches(const RoadNode& road, const ConditionSet& conditions);
CandidateSet retrieve_candidates(const RoadGraph& graph, const ConditionSet& conditions);

struct RankerOptions {
  double vehicle_gap_m = 8.0;  // longitudinal room per same-road vehicle
};

// What a check asks of the candidate road.
enum class CheckKind {
  TurnOption,        // the road's junction offers `turn`
  LaneKindPresent,   // the road (or the neighbour reached by `via`) has a lane of `lane`
  Capacity,          // the road fits the plan's vehicles
};

struct Check {
  std::string name;
  CheckKind kind = CheckKind::TurnOption;
  Turn turn = Turn::Straight;
  LaneKind lane = LaneKind::Driving;
  std::optional<Turn> via;  // LaneKindPresent on the neighbour reached by this turn
  bool operator==(const Check&) const = default;
};

// Checks derived from a plan, deduplicated by name, in table order: ego-road
// turns, lane kinds, adjacency, destination feasibility, capacity.
std::vector<Check> derive_checks(const ScenePlan& plan);

// A turn is offered when the junction at the road's end has it; a road that
// ends without a junction offers straight.
bool offers_turn(const RoadNode& road, Turn turn);
bool evaluate_check(const RoadGraph& graph, const RoadNode& road, const Check& check, const ScenePlan& plan,
                    const RankerOptions& options = {});

struct RoadScore {
  int total = 0;
  std::vector<std::pair<std::string, bool>> per_check;
  bool operator==(const RoadScore&) const = default;
};

RoadScore score_road(const RoadGraph& graph, const RoadId& road, const ScenePlan& plan,
                     const RankerOptions& options = {});

struct RankedSelection {
  std::vector<std::string> checks;
  std::vector<std::pair<RoadId, RoadScore>> scores;  // candidate order
  RoadId chosen;
  std::uint64_t seed = 0;
  bool operator==(const RankedSelection&) const = default;

  int best_total() const;
  std::vector<RoadId> argmax() const;
};

RankedSelection rank_and_select(const RoadGraph& graph, const CandidateSet& candidates, const ScenePlan& plan,
                                std::uint64_t seed, const RankerOptions& options = {});

// Uniform pick of an index below n from a seed.
std::size_t seeded_pick(std::uint64_t seed, std::size_t n);

nlohmann::json to_json(const RankedSelection& s);
RankedSelection selection_from_json(const nlohmann::json& j);

}  // namespace scenegen
