#include "scenegen/road_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "scenegen/errors.hpp"

namespace scenegen {

using nlohmann::json;

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  radians = std::fmod(radians + std::numbers::pi, two_pi);
  if (radians < 0) radians += two_pi;
  return radians - std::numbers::pi;
}

int RoadNode::driving_lane_count() const {
  return static_cast<int>(std::ranges::count(lanes, LaneKind::Driving, &Lane::kind));
}

std::vector<const Lane*> RoadNode::lanes_of(LaneKind kind) const {
  std::vector<const Lane*> out;
  for (const auto& lane : lanes)
    if (lane.kind == kind) out.push_back(&lane);
  return out;
}

const Lane* RoadNode::find_lane(int lane_id) const {
  auto it = std::ranges::find(lanes, lane_id, &Lane::lane_id);
  return it == lanes.end() ? nullptr : &*it;
}

bool RoadNode::has_lane_kind(LaneKind kind) const { return std::ranges::count(lanes, kind, &Lane::kind) > 0; }

bool RoadNode::has_object(const ObjectKind& wanted) const {
  return std::ranges::any_of(objects, [&](const ObjectKind& o) { return wanted.matches(o); });
}

double RoadNode::lateral_offset(int lane_id) const {
  double inner = 0.0;
  for (const auto& lane : lanes) {
    if (lane.lane_id == lane_id) return -(inner + lane.width / 2.0);
    inner += lane.width;
  }
  throw NotFoundError("lane " + std::to_string(lane_id) + " not on road " + id);
}

double RoadNode::total_width() const {
  double w = 0.0;
  for (const auto& lane : lanes) w += lane.width;
  return w;
}

namespace {

Pose eval_plan_view(const std::vector<PlanSegment>& geometry, double s) {
  if (geometry.empty()) return {s, 0.0, 0.0};
  auto it = std::ranges::upper_bound(geometry, s, {}, &PlanSegment::s);
  const PlanSegment& seg = it == geometry.begin() ? geometry.front() : *std::prev(it);
  const double ds = s - seg.s;
  if (std::abs(seg.curvature) < 1e-12) {
    return {seg.x + std::cos(seg.heading) * ds, seg.y + std::sin(seg.heading) * ds, seg.heading};
  }
  const double k = seg.curvature;
  const double h = seg.heading + k * ds;
  return {seg.x + (std::sin(h) - std::sin(seg.heading)) / k, seg.y + (std::cos(seg.heading) - std::cos(h)) / k,
          h};
}

}  // namespace

Pose RoadNode::reference_pose(double progress) const {
  progress = std::clamp(progress, 0.0, length);
  const double s = reversed ? length - progress : progress;
  Pose p = eval_plan_view(geometry, s);
  if (reversed) p.heading += std::numbers::pi;
  p.heading = wrap_angle(p.heading);
  return p;
}

Pose RoadNode::offset_pose(double lateral, double progress) const {
  Pose p = reference_pose(progress);
  p.x += -std::sin(p.heading) * lateral;
  p.y += std::cos(p.heading) * lateral;
  return p;
}

Pose RoadNode::lane_pose(int lane_id, double progress) const { return offset_pose(lateral_offset(lane_id), progress); }

RoadGraph::RoadGraph(std::string map_name, std::vector<RoadNode> nodes, std::vector<Connection> edges)
    : map_name_(std::move(map_name)), edges_(std::move(edges)) {
  for (auto& n : nodes) {
    const RoadId id = n.id;
    if (!nodes_.emplace(id, std::move(n)).second) throw GraphConsistencyError("duplicate road id " + id, id);
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Connection& c = edges_[i];
    for (const RoadId* end : {&c.from, &c.to}) {
      if (!nodes_.contains(*end)) throw GraphConsistencyError("connection references unknown road " + *end, *end);
    }
    const RoadNode& from = nodes_.at(c.from);
    const RoadNode& to = nodes_.at(c.to);
    for (auto [a, b] : c.lane_map) {
      if (!from.find_lane(a) || !to.find_lane(b))
        throw GraphConsistencyError("lane link " + std::to_string(a) + "->" + std::to_string(b) + " between " +
                                        c.from + " and " + c.to + " references a missing lane",
                                    c.from);
    }
    out_[c.from].push_back(i);
    in_[c.to].push_back(i);
  }
}

const RoadNode& RoadGraph::node(const RoadId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFoundError("unknown road " + id);
  return it->second;
}

std::vector<const Connection*> RoadGraph::outgoing(const RoadId& id) const {
  node(id);
  std::vector<const Connection*> out;
  if (auto it = out_.find(id); it != out_.end())
    for (auto i : it->second) out.push_back(&edges_[i]);
  return out;
}

std::vector<const Connection*> RoadGraph::incoming(const RoadId& id) const {
  node(id);
  std::vector<const Connection*> out;
  if (auto it = in_.find(id); it != in_.end())
    for (auto i : it->second) out.push_back(&edges_[i]);
  return out;
}

const RoadNode* RoadGraph::sibling(const RoadId& id) const {
  const RoadNode& n = node(id);
  const RoadId other = n.reversed ? n.base_id : n.base_id + ":rev";
  auto it = nodes_.find(other);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Connection* RoadGraph::connection(const RoadId& from, Turn turn) const {
  for (const Connection* c : outgoing(from))
    if (c->through_junction() && c->turn == turn) return c;
  return nullptr;
}

bool RoadGraph::operator==(const RoadGraph& other) const {
  return map_name_ == other.map_name_ && nodes_ == other.nodes_ && edges_ == other.edges_;
}

std::vector<const RoadNode*> neighbors(const RoadGraph& graph, const RoadId& id, std::optional<Turn> turn) {
  std::vector<const RoadNode*> out;
  for (const Connection* c : graph.outgoing(id)) {
    if (turn && c->turn != *turn) continue;
    const RoadNode* n = &graph.node(c->to);
    if (std::ranges::find(out, n) == out.end()) out.push_back(n);
  }
  return out;
}

bool has_adjacent_straight(const RoadGraph& graph, const RoadId& id, Turn relative) {
  if (relative == Turn::Straight) throw std::invalid_argument("has_adjacent_straight takes left or right");
  for (const RoadNode* n : neighbors(graph, id, relative)) {
    if (n->junction_options.contains(Turn::Straight)) return true;
    if (const RoadNode* s = graph.sibling(n->id); s && s->junction_options.contains(Turn::Straight)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json node_to_json(const RoadNode& n) {
  json lanes = json::array();
  for (const auto& l : n.lanes) lanes.push_back({{"lane_id", l.lane_id}, {"kind", to_string(l.kind)}, {"width", l.width}});
  json signals = json::array();
  for (auto s : n.signals) signals.push_back(to_string(s));
  json objects = json::array();
  for (const auto& o : n.objects) objects.push_back(to_string(o));
  json options = json::array();
  for (auto t : n.junction_options) options.push_back(to_string(t));
  json geometry = json::array();
  for (const auto& g : n.geometry)
    geometry.push_back({{"s", g.s}, {"x", g.x}, {"y", g.y}, {"hdg", g.heading}, {"length", g.length},
                        {"curvature", g.curvature}});
  return {{"id", n.id},
          {"base_id", n.base_id},
          {"reversed", n.reversed},
          {"length", n.length},
          {"lanes", std::move(lanes)},
          {"signals", std::move(signals)},
          {"objects", std::move(objects)},
          {"is_junction", n.is_junction},
          {"junction_options", std::move(options)},
          {"geometry", std::move(geometry)}};
}

template <typename T>
T require(const std::optional<T>& v, const std::string& what) {
  if (!v) throw SerializationError("bad value for " + what);
  return *v;
}

RoadNode node_from_json(const json& j) {
  RoadNode n;
  n.id = j.at("id").get<std::string>();
  n.base_id = j.at("base_id").get<std::string>();
  n.reversed = j.at("reversed").get<bool>();
  n.length = j.at("length").get<double>();
  for (const auto& l : j.at("lanes"))
    n.lanes.push_back({l.at("lane_id").get<int>(), require(parse_lane_kind(l.at("kind").get<std::string>()), "lane kind"),
                       l.at("width").get<double>()});
  for (const auto& s : j.at("signals")) n.signals.insert(require(parse_signal(s.get<std::string>()), "signal"));
  for (const auto& o : j.at("objects")) n.objects.insert(require(parse_object(o.get<std::string>()), "object"));
  n.is_junction = j.at("is_junction").get<bool>();
  for (const auto& t : j.at("junction_options"))
    n.junction_options.insert(require(parse_turn(t.get<std::string>()), "turn"));
  for (const auto& g : j.at("geometry"))
    n.geometry.push_back({g.at("s").get<double>(), g.at("x").get<double>(), g.at("y").get<double>(),
                          g.at("hdg").get<double>(), g.at("length").get<double>(), g.at("curvature").get<double>()});
  return n;
}

}  // namespace

json to_json(const RoadGraph& graph) {
  json nodes = json::array();
  for (const auto& [id, n] : graph.nodes()) nodes.push_back(node_to_json(n));
  json edges = json::array();
  for (const auto& e : graph.edges()) {
    json lane_map = json::array();
    for (auto [a, b] : e.lane_map) lane_map.push_back({a, b});
    edges.push_back({{"from", e.from}, {"to", e.to}, {"turn", to_string(e.turn)}, {"lane_map", std::move(lane_map)},
                     {"via", e.via}});
  }
  return {{"version", kGraphFormatVersion},
          {"map_name", graph.map_name()},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

RoadGraph graph_from_json(const json& doc) {
  try {
    if (!doc.is_object()) throw SerializationError("graph payload is not an object");
    const int version = doc.at("version").get<int>();
    if (version != kGraphFormatVersion)
      throw SerializationError("unsupported graph format version " + std::to_string(version));
    std::vector<RoadNode> nodes;
    for (const auto& n : doc.at("nodes")) nodes.push_back(node_from_json(n));
    std::vector<Connection> edges;
    for (const auto& e : doc.at("edges")) {
      Connection c;
      c.from = e.at("from").get<std::string>();
      c.to = e.at("to").get<std::string>();
      c.turn = require(parse_turn(e.at("turn").get<std::string>()), "turn");
      for (const auto& pair : e.at("lane_map")) c.lane_map.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
      c.via = e.value("via", std::string{});
      edges.push_back(std::move(c));
    }
    return RoadGraph(doc.at("map_name").get<std::string>(), std::move(nodes), std::move(edges));
  } catch (const json::exception& e) {
    throw SerializationError(std::string("corrupt graph payload: ") + e.what());
  } catch (const GraphConsistencyError& e) {
    throw SerializationError(std::string("inconsistent graph payload: ") + e.what());
  }
}

std::string save_graph(const RoadGraph& graph) { return to_json(graph).dump(); }

RoadGraph load_graph(std::string_view bytes) {
  json doc = json::parse(bytes, nullptr, false);
  if (doc.is_discarded()) throw SerializationError("graph payload is not valid JSON");
  return graph_from_json(doc);
}

}  // namespace scenegen
