#include <httplib.h>

#include <sstream>
#include <thread>

#include "doctest.h"
#include "scenegen/backends.hpp"
#include "scenegen/mock_grammar.hpp"
#include "scenegen/planner.hpp"
#include "scenegen/prompts.hpp"
#include "reference_prompts.hpp"

using namespace scenegen;
using nlohmann::json;

namespace {

PromptRequest request(std::string text, PromptMode mode = PromptMode::AnalysisThenStage, std::uint64_t seed = 0) {
  return PromptRequest{std::move(text), mode, seed};
}

std::size_t count_type(const ScenePlan& plan, AgentType t) {
  return static_cast<std::size_t>(
      std::ranges::count_if(plan.agents, [&](const AgentPlan& a) { return !a.is_ego && a.type == t; }));
}

}  // namespace

TEST_CASE("prompt layout") {
  AnalysisContext ctx;
  ctx.unknown = {"puddles"};
  const auto p = build_prompt(Stage::Retrieval, request("two cars", PromptMode::AnalysisPlusCot), ctx);
  CHECK(p.starts_with("road retrieval\n"));
  CHECK(p.find(cot_instruction()) != std::string::npos);
  CHECK(p.find("Context:\n" + to_json(ctx).dump()) != std::string::npos);
  CHECK(p.ends_with("Description:\ntwo cars"));
  CHECK(stage_of_prompt(p) == Stage::Retrieval);
  CHECK(stage_of_prompt(build_prompt(Stage::Planning, request("x"), std::nullopt)) == Stage::Planning);
  CHECK(stage_of_prompt(build_prompt(Stage::Analysis, request("x"), ctx)).value() == Stage::Analysis);
  CHECK(build_prompt(Stage::Analysis, request("x"), ctx).find("Context:") == std::string::npos);
  CHECK_FALSE(stage_of_prompt("hello\nDescription:\nx"));
}

TEST_CASE("prompt modes") {
  for (PromptMode m : {PromptMode::AnalysisThenStage, PromptMode::Cot, PromptMode::AnalysisPlusCot, PromptMode::Direct})
    CHECK(parse_prompt_mode(to_string(m)) == m);
  CHECK_FALSE(parse_prompt_mode("bogus"));
}

TEST_CASE("analyze: many cars and no traffic lights") {
  MockBackend mock;
  const auto ctx = analyze(request(kPrompts[0]), mock);
  CHECK(std::ranges::find(ctx.signals, SignalMention{SignalKind::TrafficLight, false}) != ctx.signals.end());
  const auto cars = std::ranges::count_if(ctx.agents, [](const AgentSketch& a) { return a.type == AgentType::Car; });
  CHECK(cars >= 10);
}

TEST_CASE("analyze: empty prompt is rejected before any backend call") {
  ScriptedBackend scripted({});
  CHECK_THROWS_AS(analyze(request(""), scripted), EmptyPromptError);
  CHECK_THROWS_AS(run_planner(request("  \n"), scripted), EmptyPromptError);
  CHECK(scripted.requests().empty());
}

TEST_CASE("analyze: lone crossing pedestrian") {
  MockBackend mock;
  const auto ctx = analyze(request("A pedestrian is crossing the road"), mock);
  REQUIRE(ctx.agents.size() == 1);
  CHECK(ctx.agents[0] == AgentSketch{AgentType::Pedestrian, LaneKind::Sidewalk, ActionKind::CrossRoad});
  CHECK(ctx.objects.empty());
  CHECK(ctx.signals.empty());
}

TEST_CASE("analyze: unknown scene items") {
  MockBackend mock;
  CHECK(analyze(request(kPrompts[14]), mock).unknown == std::vector<std::string>{"puddles"});
  CHECK(analyze(request(kPrompts[15]), mock).unknown == std::vector<std::string>{"parallel open crosswalk"});
}

TEST_CASE("derive_conditions") {
  MockBackend mock;
  SUBCASE("no traffic light maps to a without-signal") {
    const auto ctx = analyze(request(kPrompts[0]), mock);
    const auto c = derive_conditions(request(kPrompts[0]), ctx, mock);
    CHECK(std::ranges::find(c.without_signals, SignalKind::TrafficLight) != c.without_signals.end());
    CHECK(c.required_signals.empty());
  }
  SUBCASE("negated list") {
    const auto c = derive_conditions(request(kPrompts[4]), std::nullopt, mock);
    CHECK(std::ranges::find(c.without_signals, SignalKind::TrafficLight) != c.without_signals.end());
    CHECK(std::ranges::find(c.without_signals, SignalKind::StopSign) != c.without_signals.end());
    CHECK(std::ranges::find(c.without_objects, ObjectKind{ObjectType::StopSignOnRoad, std::nullopt}) !=
          c.without_objects.end());
    CHECK(c.required_objects.empty());
  }
  SUBCASE("nothing road related") {
    const auto c = derive_conditions(request("The ego car is going straight"), AnalysisContext{}, mock);
    CHECK(c == ConditionSet{1, {}, {}, {}, {}});
  }
  SUBCASE("required items and speed values") {
    const auto c = derive_conditions(
        request("The ego car stops at a ladder crosswalk near a speed sign of 40 and a stop line"), std::nullopt, mock);
    CHECK(c.required_objects == std::vector<ObjectKind>{{ObjectType::LadderCrosswalk, std::nullopt},
                                                        {ObjectType::SpeedSign, 40},
                                                        {ObjectType::StopLine, std::nullopt}});
  }
  SUBCASE("lane count from side agents") {
    const auto c = derive_conditions(request("A car on the left and a truck on the right are going straight. A bus "
                                             "on the back left is driving."),
                                     std::nullopt, mock);
    CHECK(c.number_of_lanes == 3);
  }
}

TEST_CASE("plan_agents: two cars in front block the ego car") {
  MockBackend mock;
  const auto plan = plan_agents(request("two cars in front block the ego car"), std::nullopt, mock);
  REQUIRE(plan.agents.size() == 3);
  CHECK(plan.ego().action == ActionKind::GoStraight);
  std::vector<int> pos;
  for (const auto& a : plan.agents) {
    if (a.is_ego) continue;
    CHECK(a.type == AgentType::Car);
    CHECK(a.relative_to_ego == RelativePosition::Front);
    CHECK(a.road_type == LaneKind::Driving);
    CHECK((a.action == ActionKind::BlockEgo || a.action == ActionKind::Stop));
    pos.push_back(a.pos_id);
  }
  CHECK(pos[0] != pos[1]);
  CHECK(plan.ego().pos_id > std::max(pos[0], pos[1]));
}

TEST_CASE("plan_agents: the ranking example table") {
  MockBackend mock;
  const auto plan = plan_agents(request(kPrompts[17]), std::nullopt, mock);
  REQUIRE(plan.agents.size() == 4);
  auto row = [&](std::size_t i, AgentType t, RelativePosition rel, ActionKind act, int pos) {
    CAPTURE(i);
    CHECK(plan.agents[i].type == t);
    CHECK(plan.agents[i].relative_to_ego == rel);
    CHECK(plan.agents[i].action == act);
    CHECK(plan.agents[i].pos_id == pos);
  };
  CHECK(plan.agents[0].is_ego);
  row(0, AgentType::Car, RelativePosition::None, ActionKind::TurnRight, 1);
  row(1, AgentType::Car, RelativePosition::FrontRight, ActionKind::TurnRight, 0);
  row(2, AgentType::Car, RelativePosition::RoadOfLeftTurn, ActionKind::TurnLeft, 0);
  row(3, AgentType::Pedestrian, RelativePosition::Right, ActionKind::CrossRoad, 0);
  CHECK(plan.agents[3].road_type == LaneKind::Shoulder);
  CHECK(plan.env.at_junction);
}

TEST_CASE("plan_agents: single ego") {
  MockBackend mock;
  const auto plan = plan_agents(request("the ego car is going straight"), std::nullopt, mock);
  REQUIRE(plan.agents.size() == 1);
  CHECK(plan.agents[0].is_ego);
  CHECK(plan.agents[0].action == ActionKind::GoStraight);
}

TEST_CASE("plan_agents: figure and ablation prompts") {
  MockBackend mock(3);
  auto plan_of = [&](std::size_t i) { return plan_agents(request(kPrompts[i]), std::nullopt, mock); };

  SUBCASE("stopped truck and crossing pedestrian on the front right") {
    const auto p = plan_of(1);
    REQUIRE(p.agents.size() == 3);
    CHECK(p.agents[1].type == AgentType::Pedestrian);
    CHECK(p.agents[1].action == ActionKind::CrossRoad);
    CHECK(p.agents[2].type == AgentType::Truck);
    CHECK(p.agents[2].action == ActionKind::Stop);
    CHECK(p.agents[2].road_type == LaneKind::Shoulder);
    for (std::size_t i : {1u, 2u}) CHECK(p.agents[i].relative_to_ego == RelativePosition::FrontRight);
  }
  SUBCASE("firetruck from the left road") {
    const auto p = plan_of(2);
    CHECK(p.ego().action == ActionKind::TurnRight);
    REQUIRE(count_type(p, AgentType::Firetruck) == 1);
    CHECK(p.agents[1].relative_to_ego == RelativePosition::RoadOfLeftTurn);
  }
  SUBCASE("dangerous cyclist on a rainy night") {
    const auto p = plan_of(3);
    CHECK(p.env.weather == Weather{WeatherAdjective::MidRain, TimeOfDay::Night});
    REQUIRE(p.agents.size() == 2);
    CHECK(p.agents[1].type == AgentType::Cyclist);
    CHECK(p.agents[1].behavior == Behavior::Aggressive);
    CHECK(p.agents[1].action == ActionKind::CrossRoad);
  }
  SUBCASE("oncoming car during a left turn") {
    const auto p = plan_of(4);
    CHECK(p.ego().action == ActionKind::TurnLeft);
    REQUIRE(p.agents.size() == 2);
    CHECK(is_oncoming(p, 1));
  }
  SUBCASE("blocked by two cars") {
    const auto p = plan_of(5);
    CHECK(count_type(p, AgentType::Car) == 2);
    for (const auto& a : p.agents)
      if (!a.is_ego) CHECK(a.action == ActionKind::BlockEgo);
  }
  SUBCASE("three cars including the ego") {
    const auto p = plan_of(7);
    REQUIRE(p.agents.size() == 3);
    CHECK(p.ego().action == ActionKind::TurnRight);
    CHECK(p.agents[1].relative_to_ego == RelativePosition::Front);
    CHECK(p.agents[1].action == ActionKind::GoStraight);
    CHECK(p.agents[2].relative_to_ego == RelativePosition::Back);
    CHECK(p.agents[2].action == ActionKind::TurnLeft);
  }
  SUBCASE("bus, truck and two cars") {
    const auto p = plan_of(8);
    CHECK(p.agents.size() == 5);
    CHECK(count_type(p, AgentType::Bus) == 1);
    CHECK(count_type(p, AgentType::Truck) == 1);
    CHECK(count_type(p, AgentType::Car) == 2);
  }
  SUBCASE("pedestrian on the destination") {
    const auto p = plan_of(9);
    REQUIRE(p.agents.size() == 2);
    CHECK(p.agents[1].relative_to_ego == RelativePosition::RoadOfLeftTurn);
    CHECK(p.agents[1].action == ActionKind::BlockEgo);
    CHECK(p.agents[1].behavior == Behavior::Aggressive);
  }
  SUBCASE("motorcycle on the right front") {
    const auto p = plan_of(10);
    CHECK(p.agents[1].relative_to_ego == RelativePosition::FrontRight);
    CHECK(p.agents[1].type == AgentType::Motorcycle);
  }
  SUBCASE("blocking car and stopped truck") {
    const auto p = plan_of(11);
    REQUIRE(p.agents.size() == 4);
    CHECK(p.agents[1].action == ActionKind::BlockEgo);
    CHECK(p.agents[1].relative_to_ego == RelativePosition::FrontLeft);
    CHECK(p.agents[3].type == AgentType::Truck);
    CHECK(p.agents[3].relative_to_ego == RelativePosition::FrontRight);
  }
  SUBCASE("oncoming pairs and triples") {
    for (std::size_t i : {12u, 13u}) {
      const auto p = plan_of(i);
      for (std::size_t k = 1; k < p.agents.size(); ++k) CHECK(is_oncoming(p, k));
    }
  }
}

TEST_CASE("every reference prompt plans end to end with exactly one ego") {
  for (auto mode : {PromptMode::AnalysisThenStage, PromptMode::Cot, PromptMode::AnalysisPlusCot, PromptMode::Direct})
    for (const auto& text : kPrompts) {
      CAPTURE(text);
      MockBackend mock(11);
      MeteredBackend metered(mock);
      const auto out = run_planner(request(text, mode), metered);
      CHECK(std::ranges::count_if(out.plan.agents, [](const AgentPlan& a) { return a.is_ego; }) == 1);
      CHECK(validate(Stage::Planning, to_json(out.plan)).ok());
      CHECK(metered.calls() == (uses_analysis(mode) ? 3u : 2u));
      CHECK(out.context.has_value() == uses_analysis(mode));
    }
}

TEST_CASE("mock output is a pure function of prompts and seed") {
  for (const auto& text : kPrompts) {
    MockBackend a(5);
    MockBackend b(5);
    const auto prompt = build_prompt(Stage::Planning, request(text), std::nullopt);
    CHECK(a.complete(std::string(system_prompt()), prompt) == b.complete("other", prompt));
    CHECK(run_planner(request(text), a).plan == run_planner(request(text), b).plan);
  }
}

TEST_CASE("seed only fills in unspecified weather") {
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto r = read_description("The ego car is going straight", seed);
    seen.insert(to_string(r.plan.env.weather));
    CHECK(read_description(kPrompts[3], seed).plan.env.weather ==
          Weather{WeatherAdjective::MidRain, TimeOfDay::Night});
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("token use orders direct < analysis < cot < analysis+cot") {
  std::map<PromptMode, std::size_t> tokens;
  std::map<PromptMode, std::size_t> calls;
  for (auto mode : {PromptMode::Direct, PromptMode::AnalysisThenStage, PromptMode::Cot, PromptMode::AnalysisPlusCot}) {
    MockBackend mock;
    MeteredBackend metered(mock);
    for (const auto& text : kPrompts) run_planner(request(text, mode), metered);
    tokens[mode] = metered.tokens();
    calls[mode] = metered.calls();
  }
  MESSAGE("direct " << tokens[PromptMode::Direct] << ", analysis " << tokens[PromptMode::AnalysisThenStage] << ", cot "
                    << tokens[PromptMode::Cot] << ", analysis+cot " << tokens[PromptMode::AnalysisPlusCot]);
  CHECK(tokens[PromptMode::Direct] < tokens[PromptMode::AnalysisThenStage]);
  CHECK(tokens[PromptMode::AnalysisThenStage] < tokens[PromptMode::Cot]);
  CHECK(tokens[PromptMode::Cot] < tokens[PromptMode::AnalysisPlusCot]);
  CHECK(calls[PromptMode::Direct] == 2 * kPrompts.size());
  CHECK(calls[PromptMode::AnalysisThenStage] == 3 * kPrompts.size());
}

TEST_CASE("repairs go through the same validators") {
  const json good_conditions = to_json(ConditionSet{});
  const json good_plan = to_json(read_description("The ego car is going straight").plan);
  ScriptedBackend scripted({"not json at all", "Sure! ```json\n" + good_conditions.dump() + "\n```",
                            R"({"env": {"weather": "clear noon"}})", good_plan.dump()});
  const auto out = run_planner(request("The ego car is going straight", PromptMode::Direct), scripted);
  CHECK(out.plan.agents.size() == 1);
  const auto reqs = scripted.requests();
  REQUIRE(reqs.size() == 4);
  CHECK(reqs[1].find("Your previous output was rejected.") != std::string::npos);
  CHECK(reqs[3].find("$.env.at_junction: missing_key") != std::string::npos);
}

TEST_CASE("repair exhaustion propagates") {
  ScriptedBackend scripted({"{}", "{}", "{}"});
  CHECK_THROWS_AS(analyze(request("x"), scripted, PlannerOptions{2}), RepairExhaustedError);
  CHECK(scripted.requests().size() == 3);
}

TEST_CASE("record then replay reproduces the run") {
  std::ostringstream log;
  MockBackend mock(2);
  RecordingBackend recorder(mock, log);
  const auto first = run_planner(request(kPrompts[8]), recorder);
  std::istringstream in(log.str());
  const auto records = read_transcript(in);
  REQUIRE(records.size() == 3);
  CHECK(records[0].stage == "analysis");
  CHECK(records[1].stage == "retrieval");
  CHECK(records[2].stage == "planning");

  ReplayBackend replay(records);
  CHECK(run_planner(request(kPrompts[8]), replay).plan == first.plan);
  CHECK_THROWS_AS(replay.complete("", build_prompt(Stage::Analysis, request(kPrompts[8]), std::nullopt)),
                  BackendError);
  ReplayBackend other(records);
  CHECK_THROWS_AS(run_planner(request("something else"), other), BackendError);

  std::istringstream bad("{\"stage\": \"analysis\"}\n");
  CHECK_THROWS_AS(read_transcript(bad), SerializationError);
  CHECK_THROWS_AS(load_transcript("/nonexistent/transcript.jsonl"), NotFoundError);
}

TEST_CASE("backend selection") {
  CHECK(dynamic_cast<MockBackend*>(make_backend("mock", 1).get()));
  CHECK_THROWS_AS(make_backend("magic", 1), BackendError);
  CHECK_THROWS_AS(make_backend("replay:/nonexistent.jsonl", 1), NotFoundError);
  CHECK_THROWS_AS(RemoteBackend(RemoteConfig{}), BackendError);
}

TEST_CASE("concurrent planner runs share one backend") {
  MockBackend mock(4);
  MeteredBackend metered(mock);
  std::vector<ScenePlan> plans(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < plans.size(); ++i)
    threads.emplace_back([&, i] { plans[i] = run_planner(request(kPrompts[i % 4]), metered).plan; });
  for (auto& t : threads) t.join();
  CHECK(metered.calls() == 24);
  for (std::size_t i = 4; i < plans.size(); ++i) CHECK(plans[i] == plans[i - 4]);
}

TEST_CASE("remote backend speaks chat completions") {
  httplib::Server server;
  json seen;
  std::string auth;
  std::string path;
  server.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    path = req.path;
    MockBackend mock;
    const std::string reply = mock.complete(seen["messages"][0]["content"], seen["messages"][1]["content"]);
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}.dump(),
                    "application/json");
  });
  server.Post("/broken/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  server.Post("/odd/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  RemoteBackend remote(RemoteConfig{base + "/v1/", "secret", "test-model", 5.0, 0.0});
  const auto plan = plan_agents(request("two cars in front block the ego car"), std::nullopt, remote);
  CHECK(plan.agents.size() == 3);
  CHECK(path == "/v1/chat/completions");
  CHECK(auth == "Bearer secret");
  CHECK(seen["model"] == "test-model");
  CHECK(seen["temperature"] == 0.0);
  CHECK(seen["messages"][0]["role"] == "system");
  CHECK(seen["messages"][0]["content"].get<std::string>().starts_with(std::string(system_prompt()).substr(0, 40)));
  CHECK(seen["messages"][1]["content"].get<std::string>().starts_with("planning\n"));

  CHECK_THROWS_AS(RemoteBackend(RemoteConfig{base + "/broken", "", "m"}).complete("s", "u"), BackendError);
  CHECK_THROWS_AS(RemoteBackend(RemoteConfig{base + "/odd", "", "m"}).complete("s", "u"), BackendError);
  server.stop();
  thread.join();
  CHECK_THROWS_AS(RemoteBackend(RemoteConfig{base + "/v1", "", "m", 1.0}).complete("s", "u"), BackendError);
}
