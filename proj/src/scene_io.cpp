#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scenegen/errors.hpp"
#include "scenegen/simulator.hpp"

namespace scenegen {

using nlohmann::json;

json to_json(const AgentState& a) {
  return {{"id", a.id},
          {"type", std::string(to_string(a.type))},
          {"x", a.pose.x},
          {"y", a.pose.y},
          {"heading", a.pose.heading},
          {"speed", a.speed},
          {"action", std::string(to_string(a.action))},
          {"done", a.done},
          {"road", a.road},
          {"lane", a.lane_id},
          {"s", a.s}};
}

json to_json(const Frame& f) {
  json agents = json::array();
  for (const auto& a : f.agents) agents.push_back(to_json(a));
  return {{"tick", f.tick}, {"t", f.t}, {"agents", std::move(agents)}};
}

Frame frame_from_json(const json& j) {
  try {
    Frame f;
    f.tick = j.at("tick").get<int>();
    f.t = j.at("t").get<double>();
    for (const auto& a : j.at("agents")) {
      AgentState st;
      st.id = a.at("id").get<std::string>();
      const auto type = parse_agent_type(a.at("type").get<std::string>());
      const auto action = parse_action(a.at("action").get<std::string>());
      if (!type || !action) throw SerializationError("frame " + std::to_string(f.tick) + ": unknown type or action");
      st.type = *type;
      st.action = *action;
      st.pose = {a.at("x").get<double>(), a.at("y").get<double>(), a.at("heading").get<double>()};
      st.speed = a.at("speed").get<double>();
      st.done = a.at("done").get<bool>();
      st.road = a.value("road", std::string());
      st.lane_id = a.value("lane", 0);
      st.s = a.value("s", 0.0);
      f.agents.push_back(std::move(st));
    }
    return f;
  } catch (const json::exception& e) {
    throw SerializationError(std::string("bad frame: ") + e.what());
  }
}

std::string frames_jsonl(const Scene& scene) {
  std::string out;
  for (const auto& f : scene.frames) out += to_json(f).dump() + "\n";
  return out;
}

json scene_meta(const Scene& scene) {
  json collisions = json::array();
  for (const auto& [a, b] : scene.outcome.collisions) collisions.push_back({a, b});
  const Provenance& p = scene.provenance;
  return {{"prompt", p.prompt},
          {"road", p.road},
          {"seed", p.seed},
          {"weather", to_string(p.plan.env.weather)},
          {"agent_ids", p.agent_ids},
          {"frames", scene.frames.size()},
          {"outcome", {{"kind", std::string(to_string(scene.outcome.kind))}, {"collisions", collisions}}}};
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v == 0.0 ? 0.0 : v);
  return buf;
}

const char* lane_fill(LaneKind k) {
  switch (k) {
    case LaneKind::Driving: return "#5a5a5a";
    case LaneKind::Sidewalk: return "#c4c4c4";
    case LaneKind::Shoulder: return "#c8793a";
  }
  return "#5a5a5a";
}

std::string glyph_class(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c == ' ' || c == '(' || c == ')') c = '_';
  return out;
}

struct Bounds {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  void add(double x, double y) {
    x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
  }
};

}  // namespace

std::string snapshot_svg(const RoadGraph& graph, const Scene& scene, int tick) {
  if (tick < 0 || static_cast<std::size_t>(tick) >= scene.frames.size())
    throw RangeError("tick " + std::to_string(tick) + " outside 0.." + std::to_string(scene.frames.size() - 1));
  const Frame& frame = scene.frames[static_cast<std::size_t>(tick)];

  std::ostringstream body;
  Bounds b;
  for (const auto& [id, node] : graph.nodes()) {
    const int n = std::max(1, static_cast<int>(std::ceil(node.length / 2.0)));
    double inner = 0.0;
    for (const Lane& lane : node.lanes) {
      std::string pts;
      for (int side = 0; side < 2; ++side) {
        const double lat = side == 0 ? -inner : -(inner + lane.width);
        for (int i = 0; i <= n; ++i) {
          const int k = side == 0 ? i : n - i;
          const Pose p = node.offset_pose(lat, node.length * k / n);
          b.add(p.x, p.y);
          pts += num(p.x) + "," + num(-p.y) + " ";
        }
      }
      pts.pop_back();
      body << "<polygon class=\"lane " << to_string(lane.kind) << "\" fill=\"" << lane_fill(lane.kind)
           << "\" points=\"" << pts << "\"/>\n";
      inner += lane.width;
    }
    if (node.is_junction) continue;
    const Pose end = node.offset_pose(-node.total_width() - 0.8, node.length);
    double step = 0.0;
    for (SignalKind s : node.signals) {
      body << "<circle class=\"signal " << glyph_class(to_string(s)) << "\" cx=\"" << num(end.x - std::cos(end.heading) * step)
           << "\" cy=\"" << num(-(end.y - std::sin(end.heading) * step)) << "\" r=\"0.60\" fill=\"#f2c200\"/>\n";
      step += 1.5;
    }
    for (const ObjectKind& o : node.objects) {
      const Pose p = node.offset_pose(-node.total_width() / 2.0, std::max(0.0, node.length - 2.0 - step));
      body << "<rect class=\"object " << glyph_class(to_string(o)) << "\" x=\"" << num(p.x - 0.5) << "\" y=\""
           << num(-p.y - 0.5) << "\" width=\"1.00\" height=\"1.00\" fill=\"#ffffff\"/>\n";
      step += 1.5;
    }
  }
  for (const AgentState& a : frame.agents) {
    const char* color = a.id == "ego" ? "#d62728" : "#1f77b4";
    b.add(a.pose.x, a.pose.y);
    if (is_pedestrian(a.type)) {
      body << "<circle class=\"agent\" id=\"" << a.id << "\" cx=\"" << num(a.pose.x) << "\" cy=\"" << num(-a.pose.y)
           << "\" r=\"0.40\" fill=\"" << color << "\"/>\n";
    } else {
      const Footprint f = footprint(a.type);
      body << "<rect class=\"agent\" id=\"" << a.id << "\" x=\"" << num(-f.length / 2) << "\" y=\"" << num(-f.width / 2)
           << "\" width=\"" << num(f.length) << "\" height=\"" << num(f.width) << "\" fill=\"" << color
           << "\" transform=\"translate(" << num(a.pose.x) << "," << num(-a.pose.y) << ") rotate("
           << num(-a.pose.heading * 180.0 / M_PI) << ")\"/>\n";
    }
  }
  if (b.x0 > b.x1) b = {0, 0, 1, 1};
  const double pad = 5.0;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << num(b.x0 - pad) << " " << num(-b.y1 - pad) << " "
      << num(b.x1 - b.x0 + 2 * pad) << " " << num(b.y1 - b.y0 + 2 * pad) << "\">\n"
      << body.str() << "</svg>\n";
  return out.str();
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << bytes;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_bundle(const std::filesystem::path& dir, const RoadGraph& graph, const Scene& scene, int snapshot_every) {
  std::filesystem::create_directories(dir / "snapshots");
  write_atomic(dir / "plan.json", to_json(scene.provenance.plan).dump(2) + "\n");
  write_atomic(dir / "selection.json",
               (scene.provenance.selection ? to_json(*scene.provenance.selection) : json(nullptr)).dump(2) + "\n");
  write_atomic(dir / "frames.jsonl", frames_jsonl(scene));
  write_atomic(dir / "meta.json", scene_meta(scene).dump(2) + "\n");
  const int last = static_cast<int>(scene.frames.size()) - 1;
  for (int k = 0; k <= last; k += std::max(1, snapshot_every)) {
    write_atomic(dir / "snapshots" / ("tick_" + std::to_string(k) + ".svg"), snapshot_svg(graph, scene, k));
  }
  if (last % std::max(1, snapshot_every) != 0)
    write_atomic(dir / "snapshots" / ("tick_" + std::to_string(last) + ".svg"), snapshot_svg(graph, scene, last));
}

Scene read_bundle(const std::filesystem::path& dir) {
  Scene scene;
  try {
    scene.provenance.plan = plan_from_json(json::parse(read_file(dir / "plan.json")));
    const json sel = json::parse(read_file(dir / "selection.json"));
    if (!sel.is_null()) scene.provenance.selection = selection_from_json(sel);
    std::istringstream frames(read_file(dir / "frames.jsonl"));
    std::string line;
    while (std::getline(frames, line))
      if (!line.empty()) scene.frames.push_back(frame_from_json(json::parse(line)));
    const json meta = json::parse(read_file(dir / "meta.json"));
    Provenance& p = scene.provenance;
    p.prompt = meta.at("prompt").get<std::string>();
    p.road = meta.at("road").get<std::string>();
    p.seed = meta.at("seed").get<std::uint64_t>();
    p.agent_ids = meta.at("agent_ids").get<std::vector<std::string>>();
    const std::string kind = meta.at("outcome").at("kind").get<std::string>();
    scene.outcome.kind = kind == "collision" ? OutcomeKind::Collision
                         : kind == "timed_out" ? OutcomeKind::TimedOut
                                               : OutcomeKind::Completed;
    for (const auto& pair : meta.at("outcome").at("collisions"))
      scene.outcome.collisions.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  } catch (const json::exception& e) {
    throw SerializationError("bad scene bundle " + dir.string() + ": " + e.what());
  }
  if (scene.frames.empty()) throw SerializationError("scene bundle " + dir.string() + " has no frames");
  return scene;
}

}  // namespace scenegen
