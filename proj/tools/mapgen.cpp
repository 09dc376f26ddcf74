// Writes the bundled fixture maps (maps/*.xodr).

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "map_builder.hpp"

using namespace mapgen;

namespace {

RoadSpec stub(std::string id, const std::string& junction, Dir dir, double length, std::vector<LaneSpec> approach,
              std::vector<LaneSpec> exit, const JunctionSpec& j) {
  auto [ux, uy] = unit(dir);
  const double reach = j.half + length;
  Point far{j.center.x + ux * reach, j.center.y + uy * reach};
  return RoadSpec{std::move(id), far, Arm{junction, dir}, std::move(approach), std::move(exit), {}, {}};
}

// Five candidate approaches A-E, each ending at its own junction, laid out so
// their scoring reproduces the worked road-ranking example.
std::string ranking_example() {
  MapBuilder m("ranking_example");
  struct Candidate {
    std::string id;
    double length;
    bool shoulder;
    std::vector<Dir> arms;
  };
  const std::vector<Candidate> candidates{{"A", 60, true, {Dir::W, Dir::N, Dir::E}},
                                          {"B", 14, true, {Dir::N, Dir::E}},
                                          {"C", 40, true, {Dir::E}},
                                          {"D", 14, false, {Dir::W, Dir::N, Dir::E}},
                                          {"E", 40, false, {Dir::W, Dir::E}}};
  double x = 0;
  for (const auto& c : candidates) {
    JunctionSpec j{"J" + c.id, {x, 0}, 10.0, {}};
    m.junction(j);
    m.road(stub(c.id, j.id, Dir::S, c.length, lanes(2, c.shoulder ? std::vector<std::string>{"shoulder"} : std::vector<std::string>{}),
                lanes(1), j));
    for (Dir d : c.arms) m.road(stub(c.id + "_" + letter(d), j.id, d, 50, lanes(1), lanes(1), j));
    x += 300;
  }
  return m.xml();
}

// Stem road from the south meeting a west-east through road. The west arm
// may only turn right (into the stem).
std::string t_junction() {
  MapBuilder m("t_junction");
  JunctionSpec j{"J", {0, 0}, 10.0, [](Dir from, Dir to) { return !(from == Dir::W && to == Dir::E); }};
  m.junction(j);
  m.road(stub("stem", "J", Dir::S, 60, lanes(1, {"sidewalk"}), lanes(1, {"sidewalk"}), j));
  m.road(stub("west", "J", Dir::W, 60, lanes(1, {"sidewalk"}), lanes(1, {"sidewalk"}), j));
  m.road(stub("east", "J", Dir::E, 60, lanes(1, {"sidewalk"}), lanes(1, {"sidewalk"}), j));
  return m.xml();
}

std::string four_way() {
  MapBuilder m("four_way");
  JunctionSpec j{"J", {0, 0}, 10.0, {}};
  m.junction(j);
  for (auto [name, dir] : {std::pair{"south", Dir::S}, {"north", Dir::N}, {"east", Dir::E}, {"west", Dir::W}})
    m.road(stub(name, "J", dir, 80, lanes(1, {"sidewalk"}), lanes(1, {"sidewalk"}), j));
  return m.xml();
}

struct Control {
  std::vector<SignalSpec> signals;
  std::vector<ObjectSpec> objects;
};

// 3 x 2 grid of junctions with differing control and lane layouts.
std::string town() {
  MapBuilder m("town");
  constexpr int kCols = 3;
  constexpr int kRows = 2;
  constexpr double kSpacing = 200;
  auto jid = [](int c, int r) { return "J" + std::to_string(c) + std::to_string(r); };
  std::map<std::string, JunctionSpec> junctions;
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols; ++c) {
      JunctionSpec j{jid(c, r), {c * kSpacing, r * kSpacing}, 10.0, {}};
      junctions[j.id] = j;
      m.junction(j);
    }

  const std::map<std::string, Control> control{
      {"J00", {{{"1000001", 0, "+"}}, {{"crosswalk", "ladder"}}}},
      {"J10", {{{"206", 0, "+"}}, {{"roadMark", "stopLine"}, {"roadMark", "stencilStop"}}}},
      {"J20", {{}, {{"crosswalk", "simple"}}}},
      {"J01", {{{"205", 0, "+"}}, {{"roadMark", "stopLine"}}}},
      {"J11", {{{"1000001", 0, "+"}, {"274", 60, "+"}}, {{"crosswalk", "continental"}}}},
      {"J21", {{{"274", 40, "+"}}, {{"crosswalk", "dashedSingleWhite"}}}},
  };
  // A road's forward lanes approach the junction at its end, its reverse lanes
  // the junction at its start.
  auto apply = [&](RoadSpec& road) {
    auto add = [&](const End& e, const std::string& orientation) {
      auto arm = std::get_if<Arm>(&e);
      if (!arm) return;
      const Control& ctl = control.at(arm->junction);
      for (auto s : ctl.signals) road.signals.push_back({s.type, s.value, orientation});
      for (auto o : ctl.objects) road.objects.push_back({o.type, o.name, orientation});
    };
    add(road.end, "+");
    add(road.start, "-");
  };

  auto arterial = [](int row) { return row == 0 ? lanes(3, {"sidewalk"}) : lanes(3, {"shoulder", "sidewalk"}); };
  auto avenue = [] { return lanes(2, {"shoulder", "sidewalk"}); };
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c + 1 < kCols; ++c) {
      RoadSpec road{"h" + std::to_string(c) + std::to_string(r), Arm{jid(c, r), Dir::E}, Arm{jid(c + 1, r), Dir::W},
                    arterial(r), arterial(r), {}, {}};
      apply(road);
      m.road(road);
    }
  for (int c = 0; c < kCols; ++c) {
    RoadSpec road{"v" + std::to_string(c), Arm{jid(c, 0), Dir::N}, Arm{jid(c, 1), Dir::S}, avenue(), avenue(), {}, {}};
    apply(road);
    m.road(road);
  }
  int n = 0;
  for (const auto& [id, j] : junctions) {
    const int c = id[1] - '0';
    const int r = id[2] - '0';
    std::vector<Dir> free;
    if (c == 0) free.push_back(Dir::W);
    if (c == kCols - 1) free.push_back(Dir::E);
    if (r == 0) free.push_back(Dir::S);
    if (r == kRows - 1) free.push_back(Dir::N);
    for (Dir d : free) {
      const bool wide = (n++ % 2) == 0;
      auto lane_set = wide ? lanes(2, {"shoulder", "sidewalk"}) : lanes(1, {"sidewalk"});
      RoadSpec road = stub("s" + id.substr(1) + letter(d), id, d, 90, lane_set, lane_set, j);
      apply(road);
      m.road(road);
    }
  }
  return m.xml();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the bundled fixture maps"};
  std::string out_dir = "maps";
  app.add_option("-o,--out", out_dir, "output directory");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  const std::vector<std::pair<std::string, std::string>> maps{{"ranking_example.xodr", ranking_example()},
                                                              {"t_junction.xodr", t_junction()},
                                                              {"four_way.xodr", four_way()},
                                                              {"town.xodr", town()}};
  for (const auto& [name, xml] : maps) {
    std::ofstream(std::filesystem::path(out_dir) / name) << xml;
    std::cout << "wrote " << (std::filesystem::path(out_dir) / name).string() << "\n";
  }
  return 0;
}
