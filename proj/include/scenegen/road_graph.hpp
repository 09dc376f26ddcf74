#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "scenegen/vocab.hpp"

namespace scenegen {

using RoadId = std::string;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, counter-clockwise from +x

  bool operator==(const Pose&) const = default;
};

struct Lane {
  int lane_id = 0;  // negative: right of the reference line, positive: left
  LaneKind kind = LaneKind::Driving;
  double width = 3.5;

  bool operator==(const Lane&) const = default;
};

// One plan-view record; curvature 0 is a line, anything else an arc.
struct PlanSegment {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double length = 0.0;
  double curvature = 0.0;

  bool operator==(const PlanSegment&) const = default;
};

// One travel direction of an OpenDRIVE road. The forward node (right-hand
// lanes, travelling with increasing s) keeps the road id; the reverse node
// (left-hand lanes) is "<road>:rev". Both share base_id.
struct RoadNode {
  RoadId id;
  std::string base_id;
  bool reversed = false;
  double length = 0.0;
  std::vector<Lane> lanes;  // innermost (closest to the reference line) first
  std::set<SignalKind> signals;
  std::set<ObjectKind> objects;
  bool is_junction = false;  // connecting road inside a junction
  std::set<Turn> junction_options;
  std::vector<PlanSegment> geometry;  // reference line of the base road

  bool operator==(const RoadNode&) const = default;

  int driving_lane_count() const;
  std::vector<const Lane*> lanes_of(LaneKind kind) const;
  const Lane* find_lane(int lane_id) const;
  bool has_lane_kind(LaneKind kind) const;
  bool has_signal(SignalKind kind) const { return signals.contains(kind); }
  bool has_object(const ObjectKind& wanted) const;

  // Offset of a lane centre from the reference line, measured to the left of
  // the travel direction (always negative: lanes sit right of travel).
  double lateral_offset(int lane_id) const;
  double total_width() const;
  // Pose of the reference line at progress p (0 = start of travel).
  Pose reference_pose(double progress) const;
  // Pose on a lane centre at progress p, heading along travel.
  Pose lane_pose(int lane_id, double progress) const;
  // Pose offset laterally (left-positive) from the reference line.
  Pose offset_pose(double lateral, double progress) const;
};

struct Connection {
  RoadId from;
  RoadId to;
  Turn turn = Turn::Straight;
  std::vector<std::pair<int, int>> lane_map;
  std::string via;  // connecting road for junction connections, empty for plain links

  bool operator==(const Connection&) const = default;
  bool through_junction() const { return !via.empty(); }
};

class RoadGraph {
 public:
  RoadGraph() = default;
  // Validates that every connection endpoint and lane pair resolves.
  RoadGraph(std::string map_name, std::vector<RoadNode> nodes, std::vector<Connection> edges);

  const std::string& map_name() const { return map_name_; }
  const std::map<RoadId, RoadNode>& nodes() const { return nodes_; }
  const std::vector<Connection>& edges() const { return edges_; }

  bool contains(const RoadId& id) const { return nodes_.contains(id); }
  const RoadNode& node(const RoadId& id) const;
  std::vector<const Connection*> outgoing(const RoadId& id) const;
  std::vector<const Connection*> incoming(const RoadId& id) const;
  // The opposite travel direction of the same road, if it carries lanes.
  const RoadNode* sibling(const RoadId& id) const;
  const Connection* connection(const RoadId& from, Turn turn) const;

  bool operator==(const RoadGraph& other) const;

 private:
  std::string map_name_;
  std::map<RoadId, RoadNode> nodes_;
  std::vector<Connection> edges_;
  std::map<RoadId, std::vector<std::size_t>> out_;
  std::map<RoadId, std::vector<std::size_t>> in_;
};

std::vector<const RoadNode*> neighbors(const RoadGraph& graph, const RoadId& id,
                                       std::optional<Turn> turn = std::nullopt);

// True iff a road reached from `id` by `relative` (left or right) offers a
// straight movement, looking at both travel directions of that road.
bool has_adjacent_straight(const RoadGraph& graph, const RoadId& id, Turn relative);

inline constexpr int kGraphFormatVersion = 1;

nlohmann::json to_json(const RoadGraph& graph);
RoadGraph graph_from_json(const nlohmann::json& doc);
std::string save_graph(const RoadGraph& graph);
RoadGraph load_graph(std::string_view bytes);

double wrap_angle(double radians);

}  // namespace scenegen
