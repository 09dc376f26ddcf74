#include <algorithm>
#include <array>
#include <cmath>

#include "scenegen/errors.hpp"
#include "sim_internal.hpp"

namespace scenegen::detail {

void Route::add(const Pose& p) {
  if (!points_.empty()) {
    const Pose& last = points_.back();
    const double step = std::hypot(p.x - last.x, p.y - last.y);
    if (step < 1e-6) {
      points_.back().heading = p.heading;
      return;
    }
    cum_.push_back(cum_.back() + step);
  } else {
    cum_.push_back(0.0);
  }
  points_.push_back(p);
}

void Route::mark(const RoadId& road, int lane_id, double s0, double ds) {
  const double d0 = length();
  if (!spans_.empty() && spans_.back().d0 == d0) spans_.pop_back();
  spans_.push_back({d0, road, lane_id, s0, ds});
}

Pose Route::at(double d) const {
  if (points_.empty()) return {};
  if (d <= 0.0 || points_.size() == 1) return points_.front();
  if (d >= length()) return points_.back();
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), d);
  const std::size_t i = static_cast<std::size_t>(it - cum_.begin());
  const Pose& a = points_[i - 1];
  const Pose& b = points_[i];
  const double t = (d - cum_[i - 1]) / (cum_[i] - cum_[i - 1]);
  return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
          wrap_angle(a.heading + wrap_angle(b.heading - a.heading) * t)};
}

Route::Where Route::where(double d) const {
  if (spans_.empty()) return {};
  d = std::clamp(d, 0.0, length());
  auto it = std::upper_bound(spans_.begin(), spans_.end(), d, [](double v, const Span& s) { return v < s.d0; });
  const Span& s = it == spans_.begin() ? spans_.front() : *std::prev(it);
  return {s.road, s.lane_id, s.s0 + s.ds * (d - s.d0)};
}

void append_lane(Route& r, const RoadNode& node, int lane_id, double s_from, double s_to) {
  s_from = std::clamp(s_from, 0.0, node.length);
  s_to = std::clamp(s_to, 0.0, node.length);
  r.mark(node.id, lane_id, s_from, s_to >= s_from ? 1.0 : -1.0);
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(s_to - s_from))));
  for (int i = 0; i <= n; ++i) r.add(node.lane_pose(lane_id, s_from + (s_to - s_from) * i / n));
}

void append_connector(Route& r, const Pose& a, const Pose& b, const RoadId& via, int via_lane) {
  const double chord = std::hypot(b.x - a.x, b.y - a.y);
  const double k = chord;
  const double ax = std::cos(a.heading) * k, ay = std::sin(a.heading) * k;
  const double bx = std::cos(b.heading) * k, by = std::sin(b.heading) * k;
  r.mark(via, via_lane, 0.0, 1.0);
  const int n = std::max(2, static_cast<int>(std::ceil(chord * 1.5)));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    const double x = h00 * a.x + h10 * ax + h01 * b.x + h11 * bx;
    const double y = h00 * a.y + h10 * ay + h01 * b.y + h11 * by;
    const double dh00 = 6 * t2 - 6 * t, dh10 = 3 * t2 - 4 * t + 1, dh01 = -6 * t2 + 6 * t, dh11 = 3 * t2 - 2 * t;
    const double dx = dh00 * a.x + dh10 * ax + dh01 * b.x + dh11 * bx;
    const double dy = dh00 * a.y + dh10 * ay + dh01 * b.y + dh11 * by;
    r.add({x, y, std::atan2(dy, dx)});
  }
}

Route line_route(const Pose& from, const Pose& to, const RoadId& road, int lane_id, double s) {
  Route r;
  r.mark(road, lane_id, s, 0.0);
  const double heading = std::atan2(to.y - from.y, to.x - from.x);
  const double len = std::hypot(to.x - from.x, to.y - from.y);
  const int n = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    r.add({from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t, heading});
  }
  return r;
}

namespace {

int exit_lane_for(const RoadGraph& graph, const Connection& c, int lane_id) {
  const RoadNode& from = graph.node(c.from);
  for (auto [a, b] : c.lane_map)
    if (a == lane_id) return b;
  // Nearest mapped approach lane by position.
  auto index_of = [&](int id) {
    for (std::size_t i = 0; i < from.lanes.size(); ++i)
      if (from.lanes[i].lane_id == id) return static_cast<int>(i);
    return 0;
  };
  const int mine = index_of(lane_id);
  int best = c.lane_map.front().second, dist = 1 << 20;
  for (auto [a, b] : c.lane_map) {
    const int d = std::abs(index_of(a) - mine);
    if (d < dist) dist = d, best = b;
  }
  return best;
}

}  // namespace

Route movement_route(const RoadGraph& graph, const RoadNode& node, int lane_id, double s, Turn turn,
                     double exit_length, int agent_index) {
  Route r;
  append_lane(r, node, lane_id, s, node.length);
  if (node.junction_options.empty()) {
    if (turn == Turn::Straight) return r;
    throw SpawnError("road " + node.id + " has no junction to turn at", agent_index);
  }
  const Connection* c = graph.connection(node.id, turn);
  if (!c || c->lane_map.empty())
    throw SpawnError("road " + node.id + " does not offer " + std::string(to_string(turn)), agent_index);
  const RoadNode& exit = graph.node(c->to);
  const int exit_lane = exit_lane_for(graph, *c, lane_id);
  int via_lane = 0;
  if (graph.contains(c->via)) {
    const auto lanes = graph.node(c->via).lanes_of(LaneKind::Driving);
    if (!lanes.empty()) via_lane = lanes.front()->lane_id;
  }
  append_connector(r, node.lane_pose(lane_id, node.length), exit.lane_pose(exit_lane, 0.0), c->via, via_lane);
  append_lane(r, exit, exit_lane, 0.0, std::min(exit_length, exit.length));
  return r;
}

bool overlaps(const Box& a, const Box& b) {
  auto corners = [](const Box& q) {
    const double c = std::cos(q.heading), s = std::sin(q.heading);
    const double hl = q.length / 2, hw = q.width / 2;
    std::array<std::array<double, 2>, 4> out{};
    const int sx[4] = {1, 1, -1, -1}, sy[4] = {1, -1, -1, 1};
    for (int i = 0; i < 4; ++i)
      out[i] = {q.x + c * hl * sx[i] - s * hw * sy[i], q.y + s * hl * sx[i] + c * hw * sy[i]};
    return out;
  };
  const auto ca = corners(a), cb = corners(b);
  for (const Box* q : {&a, &b}) {
    for (double ang : {q->heading, q->heading + M_PI / 2}) {
      const double ux = std::cos(ang), uy = std::sin(ang);
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : ca) {
        const double v = p[0] * ux + p[1] * uy;
        amin = std::min(amin, v), amax = std::max(amax, v);
      }
      for (const auto& p : cb) {
        const double v = p[0] * ux + p[1] * uy;
        bmin = std::min(bmin, v), bmax = std::max(bmax, v);
      }
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

}  // namespace scenegen::detail
