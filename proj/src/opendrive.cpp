#include "scenegen/opendrive.hpp"

#include <expat.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

#include "scenegen/errors.hpp"

namespace scenegen {
namespace {

struct XmlElement {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::vector<std::unique_ptr<XmlElement>> children;
  long line = 0;

  const XmlElement* child(std::string_view n) const {
    for (const auto& c : children)
      if (c->name == n) return c.get();
    return nullptr;
  }
  std::vector<const XmlElement*> all(std::string_view n) const {
    std::vector<const XmlElement*> out;
    for (const auto& c : children)
      if (c->name == n) out.push_back(c.get());
    return out;
  }
  std::string attr(const std::string& key, std::string fallback = {}) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second;
  }
  bool has(const std::string& key) const { return attrs.contains(key); }
  double number(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end()) throw ParseError("<" + name + "> is missing attribute '" + key + "'", line);
    const std::string& text = it->second;
    double value = 0.0;
    const char* begin = text.data();
    while (begin != text.data() + text.size() && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
    if (ec != std::errc{} || ptr == begin)
      throw ParseError("<" + name + "> attribute '" + key + "' is not a number: " + text, line);
    return value;
  }
  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
};

struct DomBuilder {
  XML_Parser parser = nullptr;
  std::unique_ptr<XmlElement> root;
  std::vector<XmlElement*> stack;

  static void on_start(void* data, const XML_Char* name, const XML_Char** atts) {
    auto* self = static_cast<DomBuilder*>(data);
    auto element = std::make_unique<XmlElement>();
    element->name = name;
    element->line = static_cast<long>(XML_GetCurrentLineNumber(self->parser));
    for (int i = 0; atts[i]; i += 2) element->attrs.emplace(atts[i], atts[i + 1]);
    XmlElement* raw = element.get();
    if (self->stack.empty())
      self->root = std::move(element);
    else
      self->stack.back()->children.push_back(std::move(element));
    self->stack.push_back(raw);
  }

  static void on_end(void* data, const XML_Char*) { static_cast<DomBuilder*>(data)->stack.pop_back(); }
};

std::unique_ptr<XmlElement> parse_xml(std::string_view text) {
  DomBuilder builder;
  std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)> parser(XML_ParserCreate(nullptr), &XML_ParserFree);
  builder.parser = parser.get();
  XML_SetUserData(parser.get(), &builder);
  XML_SetElementHandler(parser.get(), &DomBuilder::on_start, &DomBuilder::on_end);
  if (XML_Parse(parser.get(), text.data(), static_cast<int>(text.size()), XML_TRUE) == XML_STATUS_ERROR) {
    throw ParseError(XML_ErrorString(XML_GetErrorCode(parser.get())),
                     static_cast<long>(XML_GetCurrentLineNumber(parser.get())));
  }
  if (!builder.root) throw ParseError("document has no root element", 1);
  return std::move(builder.root);
}

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

std::optional<LaneKind> lane_kind_of(const std::string& type) {
  const std::string t = squash(type);
  if (t == "driving") return LaneKind::Driving;
  if (t == "sidewalk") return LaneKind::Sidewalk;
  if (t == "shoulder") return LaneKind::Shoulder;
  return std::nullopt;
}

struct Feature {
  std::optional<SignalKind> signal;
  std::optional<ObjectKind> object;
  std::string orientation;
};

Feature signal_feature(const XmlElement& e) {
  Feature f;
  f.orientation = e.attr("orientation", "none");
  const std::string type = e.attr("type");
  if (type == "1000001") {
    f.signal = SignalKind::TrafficLight;
  } else if (type == "206") {
    f.signal = SignalKind::StopSign;
  } else if (type == "205") {
    f.signal = SignalKind::YieldSign;
  } else if (type == "274") {
    const double v = e.number_or("value", 0.0);
    if (v <= 0) throw ParseError("speed sign without a positive value", e.line);
    f.object = ObjectKind{ObjectType::SpeedSign, static_cast<int>(std::lround(v))};
  }
  return f;
}

Feature object_feature(const XmlElement& e) {
  Feature f;
  f.orientation = e.attr("orientation", "none");
  const std::string type = squash(e.attr("type"));
  const std::string name = squash(e.attr("name") + e.attr("subtype"));
  if (type == "crosswalk") {
    if (name.find("ladder") != std::string::npos)
      f.object = ObjectKind{ObjectType::LadderCrosswalk, {}};
    else if (name.find("continental") != std::string::npos)
      f.object = ObjectKind{ObjectType::ContinentalCrosswalk, {}};
    else if (name.find("dashedsinglewhite") != std::string::npos)
      f.object = ObjectKind{ObjectType::DashedSingleWhiteCrosswalk, {}};
    else if (name.find("solidsinglewhite") != std::string::npos)
      f.object = ObjectKind{ObjectType::SolidSingleWhiteCrosswalk, {}};
    else
      f.object = ObjectKind{ObjectType::SimpleCrosswalk, {}};
  } else if (type == "roadmark") {
    if (name.find("stopline") != std::string::npos)
      f.object = ObjectKind{ObjectType::StopLine, {}};
    else if (name.find("stop") != std::string::npos)
      f.object = ObjectKind{ObjectType::StopSignOnRoad, {}};
  }
  return f;
}

struct LinkRecord {
  std::string element_type;  // road | junction
  std::string element_id;
  std::string contact;  // start | end
  long line = 0;
};

struct RawRoad {
  std::string id;
  std::string junction = "-1";
  double length = 0.0;
  std::vector<PlanSegment> geometry;
  std::vector<Lane> right;  // -1, -2, ...
  std::vector<Lane> left;   // 1, 2, ...
  std::optional<LinkRecord> predecessor;
  std::optional<LinkRecord> successor;
  std::vector<Feature> features;
  long line = 0;

  bool in_junction() const { return junction != "-1" && !junction.empty(); }
};

std::optional<LinkRecord> read_link(const XmlElement* link, std::string_view which) {
  if (!link) return std::nullopt;
  const XmlElement* e = link->child(which);
  if (!e) return std::nullopt;
  LinkRecord r{e->attr("elementType", "road"), e->attr("elementId"), e->attr("contactPoint"), e->line};
  if (r.element_id.empty()) throw ParseError("<" + std::string(which) + "> without elementId", e->line);
  if (r.element_type == "road" && r.contact != "start" && r.contact != "end")
    throw ParseError("road link needs contactPoint start|end", e->line);
  return r;
}

RawRoad read_road(const XmlElement& e) {
  RawRoad r;
  r.id = e.attr("id");
  r.line = e.line;
  if (r.id.empty()) throw ParseError("<road> without id", e.line);
  r.junction = e.attr("junction", "-1");
  r.length = e.number("length");
  if (!(r.length > 0)) throw ParseError("road " + r.id + " has non-positive length", e.line);

  if (const XmlElement* pv = e.child("planView")) {
    for (const XmlElement* g : pv->all("geometry")) {
      PlanSegment seg{g->number("s"), g->number("x"), g->number("y"), g->number("hdg"), g->number("length"), 0.0};
      if (g->children.size() != 1) throw ParseError("<geometry> must contain exactly one shape", g->line);
      const XmlElement& shape = *g->children.front();
      if (shape.name == "arc")
        seg.curvature = shape.number("curvature");
      else if (shape.name != "line")
        throw ParseError("unsupported geometry kind '" + shape.name + "' (only line and arc)", shape.line);
      r.geometry.push_back(seg);
    }
    std::ranges::sort(r.geometry, {}, &PlanSegment::s);
  }

  const XmlElement* link = e.child("link");
  r.predecessor = read_link(link, "predecessor");
  r.successor = read_link(link, "successor");

  if (const XmlElement* lanes = e.child("lanes")) {
    if (const XmlElement* section = lanes->child("laneSection")) {
      for (const char* side : {"left", "right"}) {
        const XmlElement* s = section->child(side);
        if (!s) continue;
        for (const XmlElement* l : s->all("lane")) {
          const int id = static_cast<int>(l->number("id"));
          auto kind = lane_kind_of(l->attr("type"));
          if (!kind) continue;
          const XmlElement* w = l->child("width");
          const double width = w ? w->number_or("a", 0.0) : 0.0;
          if (!(width > 0)) throw ParseError("lane " + std::to_string(id) + " has no positive width", l->line);
          if ((id < 0) != (std::string_view(side) == "right") || id == 0)
            throw ParseError("lane id " + std::to_string(id) + " is on the wrong side", l->line);
          (id < 0 ? r.right : r.left).push_back({id, *kind, width});
        }
      }
      std::ranges::sort(r.right, {}, [](const Lane& l) { return -l.lane_id; });
      std::ranges::sort(r.left, {}, &Lane::lane_id);
    }
  }

  if (const XmlElement* signals = e.child("signals"))
    for (const XmlElement* s : signals->all("signal")) r.features.push_back(signal_feature(*s));
  if (const XmlElement* objects = e.child("objects"))
    for (const XmlElement* o : objects->all("object")) r.features.push_back(object_feature(*o));
  return r;
}

struct RawConnection {
  std::string incoming;
  std::string connecting;
  std::string contact;
  std::vector<std::pair<int, int>> lane_links;
  long line = 0;
};

struct RawJunction {
  std::string id;
  std::vector<RawConnection> connections;
};

std::string forward_id(const std::string& road) { return road; }
std::string reverse_id(const std::string& road) { return road + ":rev"; }

class GraphAssembler {
 public:
  GraphAssembler(std::map<std::string, RawRoad> roads, std::map<std::string, RawJunction> junctions,
                 const OpenDriveOptions& options)
      : roads_(std::move(roads)), junctions_(std::move(junctions)), options_(options) {}

  RoadGraph build(std::string map_name) {
    for (const auto& [id, road] : roads_) add_nodes(road);
    for (const auto& [id, road] : roads_) check_links(road);
    for (const auto& [id, road] : roads_) {
      if (road.in_junction()) continue;
      add_road_links(road);
    }
    for (const auto& [id, junction] : junctions_)
      for (const auto& c : junction.connections) add_junction_connection(junction, c);

    std::vector<RoadNode> nodes;
    for (auto& [id, n] : nodes_) nodes.push_back(std::move(n));
    return RoadGraph(std::move(map_name), std::move(nodes), std::move(edges_));
  }

 private:
  void add_nodes(const RawRoad& road) {
    auto make = [&](bool reversed, const std::vector<Lane>& lanes) {
      if (lanes.empty()) return;
      RoadNode n;
      n.id = reversed ? reverse_id(road.id) : forward_id(road.id);
      n.base_id = road.id;
      n.reversed = reversed;
      n.length = road.length;
      n.lanes = lanes;
      n.is_junction = road.in_junction();
      n.geometry = road.geometry;
      for (const auto& f : road.features) {
        const bool applies = f.orientation == "none" || f.orientation.empty() ||
                             (f.orientation == "+" && !reversed) || (f.orientation == "-" && reversed);
        if (!applies) continue;
        if (f.signal) n.signals.insert(*f.signal);
        if (f.object) n.objects.insert(*f.object);
      }
      nodes_.emplace(n.id, std::move(n));
    };
    make(false, road.right);
    make(true, road.left);
  }

  void check_links(const RawRoad& road) {
    for (const auto* link : {&road.predecessor, &road.successor}) {
      if (!*link) continue;
      const LinkRecord& l = **link;
      if (l.element_type == "junction") {
        if (!junctions_.contains(l.element_id))
          throw GraphConsistencyError("road " + road.id + " links to unknown junction " + l.element_id, road.id);
      } else if (!roads_.contains(l.element_id)) {
        throw GraphConsistencyError("road " + road.id + " links to unknown road " + l.element_id, l.element_id);
      }
    }
  }

  const RoadNode* find(const std::string& id) const {
    auto it = nodes_.find(id);
    return it == nodes_.end() ? nullptr : &it->second;
  }

  Turn turn_between(const RoadNode& from, const RoadNode& to) const {
    return classify_turn(from.reference_pose(from.length).heading, to.reference_pose(0.0).heading,
                         options_.straight_threshold_deg);
  }

  static std::vector<std::pair<int, int>> pair_by_position(const RoadNode& a, const RoadNode& b) {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < std::min(a.lanes.size(), b.lanes.size()); ++i)
      out.emplace_back(a.lanes[i].lane_id, b.lanes[i].lane_id);
    return out;
  }

  void add_edge(const std::string& from, const std::string& to, std::string via = {},
                std::optional<std::vector<std::pair<int, int>>> lane_map = std::nullopt) {
    const RoadNode* a = find(from);
    const RoadNode* b = find(to);
    if (!a || !b) return;
    if (via.empty() && (a->is_junction || b->is_junction)) return;
    for (const auto& e : edges_)
      if (e.from == from && e.to == to && e.via == via) return;
    Connection c{from, to, turn_between(*a, *b), lane_map ? *lane_map : pair_by_position(*a, *b), std::move(via)};
    if (c.through_junction()) nodes_.at(from).junction_options.insert(c.turn);
    edges_.push_back(std::move(c));
  }

  void add_road_links(const RawRoad& x) {
    if (x.successor && x.successor->element_type == "road") {
      const std::string& z = x.successor->element_id;
      if (x.successor->contact == "start") {
        add_edge(forward_id(x.id), forward_id(z));
        add_edge(reverse_id(z), reverse_id(x.id));
      } else {
        add_edge(forward_id(x.id), reverse_id(z));
        add_edge(forward_id(z), reverse_id(x.id));
      }
    }
    if (x.predecessor && x.predecessor->element_type == "road") {
      const std::string& w = x.predecessor->element_id;
      if (x.predecessor->contact == "end") {
        add_edge(forward_id(w), forward_id(x.id));
        add_edge(reverse_id(x.id), reverse_id(w));
      } else {
        add_edge(reverse_id(w), forward_id(x.id));
        add_edge(reverse_id(x.id), forward_id(w));
      }
    }
  }

  void add_junction_connection(const RawJunction& junction, const RawConnection& c) {
    auto x_it = roads_.find(c.incoming);
    if (x_it == roads_.end())
      throw GraphConsistencyError("junction " + junction.id + " references unknown road " + c.incoming, c.incoming);
    auto y_it = roads_.find(c.connecting);
    if (y_it == roads_.end())
      throw GraphConsistencyError("junction " + junction.id + " references unknown road " + c.connecting,
                                  c.connecting);
    const RawRoad& x = x_it->second;
    const RawRoad& y = y_it->second;

    bool incoming_forward = true;
    if (!c.lane_links.empty()) {
      incoming_forward = c.lane_links.front().first < 0;
    } else if (x.successor && x.successor->element_type == "junction" && x.successor->element_id == junction.id) {
      incoming_forward = true;
    } else {
      incoming_forward = false;
    }
    const std::string from = incoming_forward ? forward_id(x.id) : reverse_id(x.id);

    const bool along = c.contact != "end";
    const std::optional<LinkRecord>& far = along ? y.successor : y.predecessor;
    if (!far || far->element_type != "road")
      throw GraphConsistencyError("connecting road " + y.id + " has no exit road", y.id);
    const std::string to = far->contact == "start" ? forward_id(far->element_id) : reverse_id(far->element_id);

    const RoadNode* from_node = find(from);
    const RoadNode* to_node = find(to);
    if (!from_node || !to_node) return;

    std::vector<std::pair<int, int>> lane_map;
    for (auto [a, b] : c.lane_links) {
      const std::size_t index = static_cast<std::size_t>(std::abs(b)) - 1;
      if (!from_node->find_lane(a) || index >= to_node->lanes.size()) continue;
      lane_map.emplace_back(a, to_node->lanes[index].lane_id);
    }
    if (lane_map.empty()) lane_map = pair_by_position(*from_node, *to_node);
    add_edge(from, to, y.id, lane_map);
  }

  std::map<std::string, RawRoad> roads_;
  std::map<std::string, RawJunction> junctions_;
  OpenDriveOptions options_;
  std::map<std::string, RoadNode> nodes_;
  std::vector<Connection> edges_;
};

}  // namespace

Turn classify_turn(double heading_in, double heading_out, double straight_threshold_deg) {
  const double delta = wrap_angle(heading_out - heading_in);
  if (std::abs(delta) < straight_threshold_deg * std::numbers::pi / 180.0) return Turn::Straight;
  return delta > 0 ? Turn::Left : Turn::Right;
}

RoadGraph parse_opendrive(std::string_view xml_text, const OpenDriveOptions& options) {
  const auto root = parse_xml(xml_text);
  if (root->name != "OpenDRIVE") throw ParseError("root element is <" + root->name + ">, expected <OpenDRIVE>", root->line);

  std::string map_name = "unnamed";
  if (const XmlElement* header = root->child("header")) map_name = header->attr("name", map_name);

  std::map<std::string, RawRoad> roads;
  for (const XmlElement* e : root->all("road")) {
    RawRoad r = read_road(*e);
    const std::string id = r.id;
    if (!roads.emplace(id, std::move(r)).second) throw ParseError("duplicate road id " + id, e->line);
  }
  std::map<std::string, RawJunction> junctions;
  for (const XmlElement* e : root->all("junction")) {
    RawJunction j{e->attr("id"), {}};
    for (const XmlElement* c : e->all("connection")) {
      RawConnection rc{c->attr("incomingRoad"), c->attr("connectingRoad"), c->attr("contactPoint", "start"), {},
                       c->line};
      for (const XmlElement* l : c->all("laneLink"))
        rc.lane_links.emplace_back(static_cast<int>(l->number("from")), static_cast<int>(l->number("to")));
      j.connections.push_back(std::move(rc));
    }
    junctions.emplace(j.id, std::move(j));
  }
  return GraphAssembler(std::move(roads), std::move(junctions), options).build(std::move(map_name));
}

RoadGraph load_opendrive_file(const std::filesystem::path& path, const OpenDriveOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open map file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_opendrive(buffer.str(), options);
}

}  // namespace scenegen
