// Acceptance run: one PASS/FAIL line per headline criterion. Exit status is
// the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "reference_prompts.hpp"
#include "scenegen/backends.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/opendrive.hpp"
#include "scenegen/planner.hpp"
#include "scenegen/ranker.hpp"
#include "scenegen/service.hpp"
#include "scenegen/simulator.hpp"

#include <unistd.h>

using namespace scenegen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s  %-34s %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
  std::fflush(stdout);
  if (!out.pass) ++failures;
}

const MapRegistry& maps() {
  static const MapRegistry m(SCENEGEN_MAPS_DIR);
  return m;
}

AgentPlan agent(AgentType type, ActionKind action, RelativePosition rel, int pos, LaneKind lane = LaneKind::Driving) {
  AgentPlan a;
  a.type = type;
  a.action = action;
  a.relative_to_ego = rel;
  a.pos_id = pos;
  a.road_type = lane;
  return a;
}

AgentPlan ego(ActionKind action, int pos = 0) {
  AgentPlan a = agent(AgentType::Car, action, RelativePosition::None, pos);
  a.is_ego = true;
  return a;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "scenegen-accept-XXXXXX").string();
    path = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// ---- road ranking walkthrough ------------------------------------------------

Outcome ranking_golden() {
  const RoadGraph& g = maps().get("ranking_example");
  ScenePlan plan;
  plan.env.at_junction = true;
  plan.agents = {ego(ActionKind::TurnRight, 1),
                 agent(AgentType::Car, ActionKind::TurnRight, RelativePosition::FrontRight, 0),
                 agent(AgentType::Car, ActionKind::TurnLeft, RelativePosition::RoadOfLeftTurn, 0),
                 agent(AgentType::Pedestrian, ActionKind::CrossRoad, RelativePosition::Right, 0, LaneKind::Shoulder)};
  const std::vector<std::string> columns{"R. Turn", "Shoulder", "L. Turn", "Straight", "Two Cars"};
  const std::map<std::string, std::vector<bool>> table{{"A", {true, true, true, true, true}},
                                                       {"B", {true, true, false, true, false}},
                                                       {"C", {true, true, false, false, true}},
                                                       {"D", {true, false, true, true, false}},
                                                       {"E", {true, false, true, false, true}}};
  const std::map<std::string, int> totals{{"A", 5}, {"B", 3}, {"C", 3}, {"D", 3}, {"E", 3}};
  for (const auto& [road, row] : table) {
    const RoadScore s = score_road(g, road, plan);
    if (s.total != totals.at(road)) return {false, "road " + road + " total " + std::to_string(s.total)};
    if (s.per_check.size() != columns.size()) return {false, "road " + road + " has the wrong checks"};
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (s.per_check[k] != std::pair{columns[k], row[k]}) return {false, "road " + road + " column " + columns[k]};
  }
  ConditionSet c;
  c.number_of_lanes = 2;
  const CandidateSet cands = retrieve_candidates(g, c);
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    if (rank_and_select(g, cands, plan, seed).chosen != "A") return {false, "seed " + std::to_string(seed)};
  return {true, "totals A5 B3 C3 D3 E3, matrix exact, A chosen for 1000/1000 seeds"};
}

// ---- retrieval -------------------------------------------------------------

RoadGraph random_graph(std::mt19937& rng) {
  const int n = 1 + static_cast<int>(rng() % 12);
  std::vector<RoadNode> nodes;
  for (int i = 0; i < n; ++i) {
    RoadNode node;
    node.id = node.base_id = "r" + std::to_string(i);
    node.length = 5.0 + static_cast<double>(rng() % 100);
    const int lanes = static_cast<int>(rng() % 5);
    for (int l = 1; l <= lanes; ++l) node.lanes.push_back({-l, all_lane_kinds()[rng() % 3], 3.0});
    for (auto s : all_signals())
      if (rng() % 3 == 0) node.signals.insert(s);
    for (auto o : all_object_types())
      if (rng() % 4 == 0)
        node.objects.insert(ObjectKind{o, o == ObjectType::SpeedSign ? std::optional<int>(30 + 10 * (rng() % 4))
                                                                     : std::nullopt});
    node.is_junction = rng() % 6 == 0;
    node.geometry.push_back({0.0, 0.0, 0.0, 0.0, node.length, 0.0});
    nodes.push_back(node);
  }
  return RoadGraph("random", nodes, {});
}

ConditionSet random_conditions(std::mt19937& rng) {
  ConditionSet c;
  c.number_of_lanes = static_cast<int>(rng() % 4);
  for (auto s : all_signals()) {
    const auto r = rng() % 14;
    if (r == 0) c.required_signals.push_back(s);
    if (r == 1) c.without_signals.push_back(s);
  }
  for (auto o : all_object_types()) {
    const auto r = rng() % 18;
    ObjectKind k{o, std::nullopt};
    if (o == ObjectType::SpeedSign && rng() % 2) k.speed_kmh = 30 + 10 * static_cast<int>(rng() % 4);
    if (r == 0) c.required_objects.push_back(k);
    if (r == 1) c.without_objects.push_back(k);
  }
  return c;
}

// Brute force, one clause at a time.
std::vector<RoadId> brute_force(const RoadGraph& g, const ConditionSet& c) {
  std::vector<RoadId> out;
  for (const auto& [id, r] : g.nodes()) {
    int driving = 0;
    for (const auto& l : r.lanes) driving += l.kind == LaneKind::Driving;
    auto has_obj = [&](const ObjectKind& want) {
      for (const auto& o : r.objects)
        if (o.type == want.type && (!want.speed_kmh || want.speed_kmh == o.speed_kmh)) return true;
      return false;
    };
    bool ok = !r.is_junction && driving >= 1 && driving >= c.number_of_lanes;
    for (auto s : c.required_signals) ok = ok && r.signals.count(s) == 1;
    for (auto s : c.without_signals) ok = ok && r.signals.count(s) == 0;
    for (const auto& o : c.required_objects) ok = ok && has_obj(o);
    for (const auto& o : c.without_objects) ok = ok && !has_obj(o);
    if (ok) out.push_back(id);
  }
  return out;
}

Outcome retrieval_oracle() {
  std::mt19937 rng(31337);
  int empty = 0;
  constexpr int kCases = 2000;
  for (int trial = 0; trial < kCases; ++trial) {
    const RoadGraph g = random_graph(rng);
    const ConditionSet c = random_conditions(rng);
    const auto expected = brute_force(g, c);
    std::vector<RoadId> got;
    try {
      got = retrieve_candidates(g, c).roads;
    } catch (const NoCandidateError&) {
      ++empty;
    }
    if (got != expected) return {false, "case " + std::to_string(trial) + " differs"};
  }
  return {true, std::to_string(kCases) + " cases equal (" + std::to_string(empty) + " empty)"};
}

Outcome tie_break() {
  const RoadGraph& g = maps().get("four_way");
  ScenePlan p;
  p.agents = {ego(ActionKind::TurnLeft)};
  const CandidateSet c{{"south", "north"}, {}};
  if (score_road(g, "south", p) != score_road(g, "north", p)) return {false, "candidates do not tie"};
  constexpr int kDraws = 10000;
  int south = 0;
  for (std::uint64_t seed = 0; seed < kDraws; ++seed) south += rank_and_select(g, c, p, seed).chosen == "south";
  const double f = static_cast<double>(south) / kDraws;
  char buf[64];
  std::snprintf(buf, sizeof buf, "frequency %.4f over %d draws", f, kDraws);
  return {std::abs(f - 0.5) <= 0.02, buf};
}

// ---- verification loop -----------------------------------------------------

Outcome verification_loop() {
  const std::string prompt = build_prompt(Stage::Retrieval, PromptRequest{"two cars", PromptMode::Direct, 0}, std::nullopt);
  const std::string good = to_json(ConditionSet{}).dump();
  const std::string bad = R"({"number_of_lanes": "two"})";

  ScriptedBackend valid({good});
  const auto v = verify_and_repair(Stage::Retrieval, prompt, valid, 3);
  if (v.attempts != 1 || valid.requests().size() != 1) return {false, "valid output took more than one call"};

  ScriptedBackend once({bad, good});
  const auto r = verify_and_repair(Stage::Retrieval, prompt, once, 3);
  const auto reqs = once.requests();
  const std::string diag = format_diagnostics(validate(Stage::Retrieval, std::string_view(bad)));
  if (r.attempts != 2 || reqs.size() != 2) return {false, "one repair did not take two calls"};
  if (reqs[1].find(diag) == std::string::npos || reqs[1].find(bad) == std::string::npos)
    return {false, "retry request lacks the diagnostics"};

  const int max_retries = 3;
  ScriptedBackend never(std::vector<std::string>(10, bad));
  try {
    verify_and_repair(Stage::Retrieval, prompt, never, max_retries);
    return {false, "no RepairExhaustedError"};
  } catch (const RepairExhaustedError& e) {
    if (never.requests().size() != static_cast<std::size_t>(max_retries + 1))
      return {false, "exhaustion after " + std::to_string(never.requests().size()) + " calls"};
  }
  return {true, "attempts 1, 2 with diagnostics, exhausted after max_retries + 1 = 4 calls"};
}

// ---- diversity -------------------------------------------------------------

Outcome diversity() {
  const std::string prompt = "The ego car is going straight";
  TempDir tmp;
  SceneStore store(tmp.path);
  std::set<std::string> roads;
  std::size_t eligible = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MockBackend mock(seed);
    const PipelineRun run = run_pipeline(store, maps(), PromptRequest{prompt, PromptMode::AnalysisThenStage, seed},
                                         "town", mock);
    if (run.status != RunStatus::Done) return {false, "seed " + std::to_string(seed) + " failed"};
    roads.insert(run.selection->chosen);
    eligible = run.selection->argmax().size();
  }
  const double d = static_cast<double>(roads.size()) / 5.0;
  char buf[96];
  std::snprintf(buf, sizeof buf, "road diversity %.2f (%zu unique of 5, %zu eligible roads)", d, roads.size(), eligible);
  return {d >= 0.8 && eligible >= 5, buf};
}

// ---- simulator -------------------------------------------------------------

struct Generated {
  RoadId road;
  ScenePlan plan;
};

Generated random_scene(std::mt19937& rng, const RoadGraph& g, const std::vector<RoadId>& roads) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  Generated out;
  out.road = roads[static_cast<std::size_t>(pick(static_cast<int>(roads.size())))];
  const int lanes = g.node(out.road).driving_lane_count();
  const std::vector<ActionKind> moves{ActionKind::GoStraight, ActionKind::Stop, ActionKind::TurnLeft,
                                      ActionKind::TurnRight};
  const std::vector<AgentType> types{AgentType::Car, AgentType::Truck, AgentType::Bus, AgentType::Motorcycle,
                                     AgentType::Police};
  AgentPlan e = ego(moves[static_cast<std::size_t>(pick(4))]);
  e.behavior = all_behaviors()[static_cast<std::size_t>(pick(3))];
  std::vector<AgentPlan> ahead, behind;
  const int extra = pick(5);
  for (int k = 0; k < extra; ++k) {
    const int col = lanes < 2 ? 0 : pick(3) - 1;
    const bool front = pick(2) == 0;
    RelativePosition rel = front ? RelativePosition::Front : RelativePosition::Back;
    if (col == -1) rel = front ? RelativePosition::FrontLeft : RelativePosition::BackLeft;
    if (col == 1) rel = front ? RelativePosition::FrontRight : RelativePosition::BackRight;
    AgentPlan a = agent(types[static_cast<std::size_t>(pick(5))], moves[static_cast<std::size_t>(pick(4))], rel, 0);
    a.behavior = all_behaviors()[static_cast<std::size_t>(pick(3))];
    (front ? ahead : behind).push_back(a);
  }
  int pos = 0;
  for (auto& a : ahead) a.pos_id = pos++;
  e.pos_id = pos++;
  for (auto& a : behind) a.pos_id = pos++;
  out.plan.env.at_junction = true;
  out.plan.agents = {e};
  out.plan.agents.insert(out.plan.agents.end(), ahead.begin(), ahead.end());
  out.plan.agents.insert(out.plan.agents.end(), behind.begin(), behind.end());
  std::shuffle(out.plan.agents.begin() + 1, out.plan.agents.end(), rng);
  return out;
}

Outcome simulator_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  const RoadGraph& g = maps().get("town");
  std::vector<RoadId> roads;
  for (const auto& [id, n] : g.nodes())
    if (!n.is_junction && n.junction_options.size() == 3) roads.push_back(id);
  std::mt19937 rng(500);
  SimConfig cfg;
  double top_speed = 0.0;
  for (const auto& [b, p] : cfg.profiles) top_speed = std::max(top_speed, p.target_speed);
  const double step_bound = top_speed * cfg.dt + 1e-9;
  const std::size_t frame_bound = static_cast<std::size_t>(std::ceil(cfg.timeout_s / cfg.dt)) + 1;
  int rendered = 0, rejected = 0;
  constexpr int kPlans = 500;
  for (int trial = 0; trial < kPlans; ++trial) {
    const Generated gen = random_scene(rng, g, roads);
    const std::string tag = "plan " + std::to_string(trial) + ": ";
    Scene a;
    try {
      const SpawnSolution spawn = solve_spawns(g, gen.road, gen.plan, cfg);
      const auto& ag = gen.plan.agents;
      for (std::size_t i = 0; i < ag.size(); ++i)
        for (std::size_t j = 0; j < ag.size(); ++j) {
          const auto &si = spawn.agents[i], &sj = spawn.agents[j];
          if (si.road == sj.road && si.lane_id == sj.lane_id && ag[i].pos_id < ag[j].pos_id && !(si.s > sj.s))
            return {false, tag + "spawn order broken"};
        }
      a = render_scene(g, gen.road, gen.plan, cfg);
    } catch (const SpawnError&) {
      ++rejected;
      continue;
    }
    ++rendered;
    if (a.frames.size() > frame_bound) return {false, tag + "ran past the timeout"};
    for (std::size_t k = 1; k < a.frames.size(); ++k)
      for (std::size_t i = 0; i < a.frames[k].agents.size(); ++i) {
        const Pose& p = a.frames[k].agents[i].pose;
        const Pose& q = a.frames[k - 1].agents[i].pose;
        if (std::hypot(p.x - q.x, p.y - q.y) > step_bound) return {false, tag + "teleport at tick " + std::to_string(k)};
      }
    const Scene b = render_scene(g, gen.road, gen.plan, cfg);
    if (std::hash<std::string>{}(frames_jsonl(a)) != std::hash<std::string>{}(frames_jsonl(b)) ||
        frames_jsonl(a) != frames_jsonl(b))
      return {false, tag + "frame streams differ between runs"};
  }
  for (const RoadId road : {"h00", "v1", "s00W"})
    for (ActionKind act : {ActionKind::GoStraight, ActionKind::TurnLeft, ActionKind::TurnRight}) {
      std::map<Behavior, std::size_t> ticks;
      for (Behavior b : all_behaviors()) {
        ScenePlan p;
        p.env.at_junction = true;
        p.agents = {ego(act)};
        p.agents[0].behavior = b;
        const Scene s = render_scene(g, road, p, cfg);
        if (s.outcome.kind != OutcomeKind::Completed) return {false, "lone ego did not complete on " + road};
        ticks[b] = s.frames.size();
      }
      if (!(ticks[Behavior::Cautious] > ticks[Behavior::Normal] && ticks[Behavior::Normal] > ticks[Behavior::Aggressive]))
        return {false, "behaviour ordering broken on " + road};
    }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream o;
  o << kPlans << " plans (" << rendered << " rendered, " << rejected << " rejected at spawn), ordering on 9 cases";
  if (secs >= 60.0) return {false, o.str() + ", over 60 s"};
  return {rendered >= kPlans / 2, o.str()};
}

// ---- service ---------------------------------------------------------------

Outcome continuity() {
  TempDir tmp;
  SceneStore store(tmp.path);
  MockBackend mock;
  auto req = [](std::string text) { return PromptRequest{std::move(text), PromptMode::AnalysisThenStage, 0}; };
  std::vector<PipelineRun> chain{run_pipeline(store, maps(), req(kPrompts[4]), "four_way", mock)};
  for (const std::string& text : {kPrompts[5], std::string("The ego car is going straight")}) {
    if (chain.back().status != RunStatus::Done) return {false, chain.back().id + " not done"};
    chain.push_back(continue_run(store, maps(), chain.back().id, req(text), mock));
  }
  if (chain.back().status != RunStatus::Done) return {false, chain.back().id + " not done"};
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const Frame& end = chain[k - 1].scene->final_frame();
    const Frame& f0 = chain[k].scene->frames.front();
    for (const auto& st : end.agents) {
      const Pose& p = f0.agent(st.id).pose;
      worst = std::max({worst, std::abs(p.x - st.pose.x), std::abs(p.y - st.pose.y), std::abs(p.heading - st.pose.heading)});
      ++compared;
    }
  }
  std::ostringstream o;
  o << "3-run lineage, " << compared << " persisting poses, max delta " << worst;
  return {worst == 0.0 && compared > 0, o.str()};
}

bool plan_valid(const ScenePlan& p) { return validate(Stage::Planning, to_json(p)).ok(); }

Outcome end_to_end() {
  TempDir tmp;
  SceneStore store(tmp.path);
  int ok = 0;
  std::string missing;
  for (std::size_t i = 0; i < kPrompts.size(); ++i) {
    bool done = false;
    for (const std::string& map : maps().names()) {
      MockBackend mock;
      const PipelineRun run =
          run_pipeline(store, maps(), PromptRequest{kPrompts[i], PromptMode::AnalysisThenStage, 0}, map, mock);
      if (run.status == RunStatus::Done && run.plan && plan_valid(*run.plan)) {
        done = true;
        break;
      }
    }
    ok += done;
    if (!done) missing += " #" + std::to_string(i);
  }
  std::ostringstream o;
  o << ok << "/" << kPrompts.size() << " prompts done with a valid plan";
  if (!missing.empty()) o << "; failed:" << missing;
  return {ok == static_cast<int>(kPrompts.size()), o.str()};
}

}  // namespace

int main() {
  criterion("ranking walkthrough golden", ranking_golden);
  criterion("retrieval oracle equivalence", retrieval_oracle);
  criterion("tie-break uniformity", tie_break);
  criterion("verification loop contract", verification_loop);
  criterion("road diversity", diversity);
  criterion("simulator invariants", simulator_invariants);
  criterion("sequential continuity", continuity);
  criterion("end-to-end mock pipeline", end_to_end);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
