#pragma once

// Small OpenDRIVE writer for the bundled fixture maps: straight roads between
// square junctions whose arms point along the compass directions. Connecting
// roads are lines (straight movements) or quarter arcs (turns).

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace mapgen {

enum class Dir { N, E, S, W };

inline std::pair<double, double> unit(Dir d) {
  switch (d) {
    case Dir::N: return {0, 1};
    case Dir::E: return {1, 0};
    case Dir::S: return {0, -1};
    case Dir::W: return {-1, 0};
  }
  return {0, 0};
}

inline char letter(Dir d) { return "NESW"[static_cast<int>(d)]; }

struct LaneSpec {
  std::string type = "driving";
  double width = 3.5;
};

struct SignalSpec {
  std::string type;  // 1000001 light, 206 stop, 205 yield, 274 speed
  int value = 0;
  std::string orientation = "+";
};

struct ObjectSpec {
  std::string type;  // crosswalk | roadMark
  std::string name;
  std::string orientation = "+";
};

struct Point {
  double x = 0;
  double y = 0;
};

struct Arm {
  std::string junction;
  Dir dir = Dir::N;
};

using End = std::variant<Point, Arm>;

struct RoadSpec {
  std::string id;
  End start;
  End end;
  std::vector<LaneSpec> right;  // innermost first
  std::vector<LaneSpec> left;   // innermost first
  std::vector<SignalSpec> signals;
  std::vector<ObjectSpec> objects;
};

struct JunctionSpec {
  std::string id;
  Point center;
  double half = 10.0;
  // Movement filter; default allows everything except U-turns.
  std::function<bool(Dir from, Dir to)> allow;
};

inline std::vector<LaneSpec> lanes(int driving, std::vector<std::string> outer = {}) {
  std::vector<LaneSpec> out(static_cast<std::size_t>(driving));
  for (auto& kind : outer) out.push_back({kind, kind == "sidewalk" ? 2.0 : 2.5});
  return out;
}

class MapBuilder {
 public:
  explicit MapBuilder(std::string name) : name_(std::move(name)) {}

  void junction(JunctionSpec j) { junctions_.push_back(std::move(j)); }
  void road(RoadSpec r) { roads_.push_back(std::move(r)); }

  std::string xml() const {
    std::ostringstream o;
    o.precision(12);
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<OpenDRIVE>\n";
    o << "  <header revMajor=\"1\" revMinor=\"4\" name=\"" << name_ << "\"/>\n";
    for (const auto& r : roads_) write_road(o, r);
    for (const auto& j : junctions_) write_junction_roads(o, j);
    for (const auto& j : junctions_) write_junction(o, j);
    o << "</OpenDRIVE>\n";
    return o.str();
  }

 private:
  struct Attachment {
    const RoadSpec* road;
    bool at_end;  // the road's end (true) or start (false) touches the junction
  };

  const JunctionSpec& find_junction(const std::string& id) const {
    for (const auto& j : junctions_)
      if (j.id == id) return j;
    throw std::runtime_error("unknown junction " + id);
  }

  Point position(const End& e) const {
    if (auto p = std::get_if<Point>(&e)) return *p;
    const Arm& a = std::get<Arm>(e);
    const JunctionSpec& j = find_junction(a.junction);
    auto [ux, uy] = unit(a.dir);
    return {j.center.x + ux * j.half, j.center.y + uy * j.half};
  }

  std::map<Dir, Attachment> arms(const JunctionSpec& j) const {
    std::map<Dir, Attachment> out;
    for (const auto& r : roads_) {
      if (auto a = std::get_if<Arm>(&r.start); a && a->junction == j.id) out[a->dir] = {&r, false};
      if (auto a = std::get_if<Arm>(&r.end); a && a->junction == j.id) out[a->dir] = {&r, true};
    }
    return out;
  }

  static void write_lanes(std::ostringstream& o, const std::vector<LaneSpec>& left,
                          const std::vector<LaneSpec>& right) {
    o << "    <lanes>\n      <laneSection s=\"0\">\n";
    if (!left.empty()) {
      o << "        <left>\n";
      for (std::size_t i = left.size(); i-- > 0;)
        o << "          <lane id=\"" << i + 1 << "\" type=\"" << left[i].type << "\" level=\"false\"><width sOffset=\"0\" a=\""
          << left[i].width << "\" b=\"0\" c=\"0\" d=\"0\"/></lane>\n";
      o << "        </left>\n";
    }
    o << "        <center><lane id=\"0\" type=\"none\" level=\"false\"/></center>\n";
    if (!right.empty()) {
      o << "        <right>\n";
      for (std::size_t i = 0; i < right.size(); ++i)
        o << "          <lane id=\"-" << i + 1 << "\" type=\"" << right[i].type << "\" level=\"false\"><width sOffset=\"0\" a=\""
          << right[i].width << "\" b=\"0\" c=\"0\" d=\"0\"/></lane>\n";
      o << "        </right>\n";
    }
    o << "      </laneSection>\n    </lanes>\n";
  }

  static std::string link_xml(const std::string& tag, const End& e) {
    if (auto a = std::get_if<Arm>(&e))
      return "      <" + tag + " elementType=\"junction\" elementId=\"" + a->junction + "\"/>\n";
    return {};
  }

  void write_road(std::ostringstream& o, const RoadSpec& r) const {
    const Point a = position(r.start);
    const Point b = position(r.end);
    const double length = std::hypot(b.x - a.x, b.y - a.y);
    const double hdg = std::atan2(b.y - a.y, b.x - a.x);
    o << "  <road name=\"" << r.id << "\" length=\"" << length << "\" id=\"" << r.id << "\" junction=\"-1\">\n";
    o << "    <link>\n" << link_xml("predecessor", r.start) << link_xml("successor", r.end) << "    </link>\n";
    o << "    <planView>\n      <geometry s=\"0\" x=\"" << a.x << "\" y=\"" << a.y << "\" hdg=\"" << hdg
      << "\" length=\"" << length << "\"><line/></geometry>\n    </planView>\n";
    write_lanes(o, r.left, r.right);
    int next_id = 1;
    if (!r.signals.empty()) {
      o << "    <signals>\n";
      for (const auto& s : r.signals)
        o << "      <signal s=\"" << length - 2 << "\" t=\"-4\" id=\"" << r.id << "_sig" << next_id++
          << "\" dynamic=\"" << (s.type == "1000001" ? "yes" : "no") << "\" orientation=\"" << s.orientation
          << "\" type=\"" << s.type << "\" subtype=\"-1\" value=\"" << s.value << "\"/>\n";
      o << "    </signals>\n";
    }
    if (!r.objects.empty()) {
      o << "    <objects>\n";
      for (const auto& obj : r.objects)
        o << "      <object s=\"" << length - 3 << "\" t=\"0\" id=\"" << r.id << "_obj" << next_id++ << "\" type=\""
          << obj.type << "\" name=\"" << obj.name << "\" orientation=\"" << obj.orientation << "\"/>\n";
      o << "    </objects>\n";
    }
    o << "  </road>\n";
  }

  static const std::vector<LaneSpec>& incoming_lanes(const Attachment& a) {
    return a.at_end ? a.road->right : a.road->left;
  }

  static int lane_id(const Attachment& a, std::size_t index) {
    return a.at_end ? -static_cast<int>(index + 1) : static_cast<int>(index + 1);
  }

  static std::optional<std::size_t> pick_lane(const std::vector<LaneSpec>& lanes, bool outermost) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      if (lanes[i].type != "driving") continue;
      if (!pick || outermost) pick = i;
    }
    return pick;
  }

  struct Movement {
    Dir from;
    Dir to;
    std::string id;
    int turn;  // +1 left, -1 right, 0 straight
  };

  std::vector<Movement> movements(const JunctionSpec& j) const {
    std::vector<Movement> out;
    const auto attached = arms(j);
    for (const auto& [from, a] : attached) {
      if (incoming_lanes(a).empty()) continue;
      for (const auto& [to, b] : attached) {
        if (from == to) continue;
        const std::vector<LaneSpec>& exit_lanes = b.at_end ? b.road->left : b.road->right;
        if (exit_lanes.empty()) continue;
        if (j.allow && !j.allow(from, to)) continue;
        auto [ix, iy] = unit(from);
        auto [ox, oy] = unit(to);
        const double cross = (-ix) * oy - (-iy) * ox;
        const int turn = std::abs(cross) < 1e-9 ? 0 : (cross > 0 ? 1 : -1);
        out.push_back({from, to, j.id + "_" + letter(from) + letter(to), turn});
      }
    }
    return out;
  }

  void write_junction_roads(std::ostringstream& o, const JunctionSpec& j) const {
    const auto attached = arms(j);
    for (const auto& m : movements(j)) {
      const Attachment& a = attached.at(m.from);
      const Attachment& b = attached.at(m.to);
      auto [ix, iy] = unit(m.from);
      const Point start{j.center.x + ix * j.half, j.center.y + iy * j.half};
      const double hdg = std::atan2(-iy, -ix);
      const double length = m.turn == 0 ? 2 * j.half : std::numbers::pi / 2 * j.half;
      o << "  <road name=\"" << m.id << "\" length=\"" << length << "\" id=\"" << m.id << "\" junction=\"" << j.id
        << "\">\n";
      o << "    <link>\n      <predecessor elementType=\"road\" elementId=\"" << a.road->id << "\" contactPoint=\""
        << (a.at_end ? "end" : "start") << "\"/>\n      <successor elementType=\"road\" elementId=\"" << b.road->id
        << "\" contactPoint=\"" << (b.at_end ? "end" : "start") << "\"/>\n    </link>\n";
      o << "    <planView>\n      <geometry s=\"0\" x=\"" << start.x << "\" y=\"" << start.y << "\" hdg=\"" << hdg
        << "\" length=\"" << length << "\">";
      if (m.turn == 0)
        o << "<line/>";
      else
        o << "<arc curvature=\"" << m.turn / j.half << "\"/>";
      o << "</geometry>\n    </planView>\n";
      write_lanes(o, {}, {LaneSpec{}});
      o << "  </road>\n";
    }
  }

  void write_junction(std::ostringstream& o, const JunctionSpec& j) const {
    const auto attached = arms(j);
    o << "  <junction id=\"" << j.id << "\" name=\"" << j.id << "\">\n";
    int cid = 0;
    for (const auto& m : movements(j)) {
      const Attachment& a = attached.at(m.from);
      auto lane = pick_lane(incoming_lanes(a), m.turn < 0);
      if (!lane) continue;
      o << "    <connection id=\"" << cid++ << "\" incomingRoad=\"" << a.road->id << "\" connectingRoad=\"" << m.id
        << "\" contactPoint=\"start\">\n      <laneLink from=\"" << lane_id(a, *lane)
        << "\" to=\"-1\"/>\n    </connection>\n";
    }
    o << "  </junction>\n";
  }

  std::string name_;
  std::vector<JunctionSpec> junctions_;
  std::vector<RoadSpec> roads_;
};

}  // namespace mapgen
