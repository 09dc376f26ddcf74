#pragma once

#include <string>
#include <vector>

#include "scenegen/road_graph.hpp"

namespace scenegen::detail {

// Polyline path with arc-length parameter d and a map from d back to road
// coordinates.
class Route {
 public:
  struct Where {
    RoadId road;
    int lane_id = 0;
    double s = 0.0;
  };

  void add(const Pose& p);
  // Points added from now on belong to (road, lane), with progress
  // s0 + ds * (d - d_start).
  void mark(const RoadId& road, int lane_id, double s0, double ds);
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
  bool empty() const { return points_.empty(); }
  Pose at(double d) const;
  Where where(double d) const;
  const std::vector<Pose>& points() const { return points_; }
  const std::vector<double>& cum() const { return cum_; }

 private:
  struct Span {
    double d0;
    RoadId road;
    int lane_id;
    double s0;
    double ds;
  };
  std::vector<Pose> points_;
  std::vector<double> cum_;
  std::vector<Span> spans_;
};

void append_lane(Route& r, const RoadNode& node, int lane_id, double s_from, double s_to);
void append_connector(Route& r, const Pose& a, const Pose& b, const RoadId& via, int via_lane);
Route line_route(const Pose& from, const Pose& to, const RoadId& road, int lane_id, double s);

// Drive from (node, lane, s) to the end of the road and through the junction
// movement for `turn`. Throws SpawnError(agent_index) when the road does not
// offer the turn.
Route movement_route(const RoadGraph& graph, const RoadNode& node, int lane_id, double s, Turn turn,
                     double exit_length, int agent_index);

struct Box {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;
};

bool overlaps(const Box& a, const Box& b);

}  // namespace scenegen::detail
