#pragma once

// Typed forms of the three stage outputs (analysis, road retrieval, agent
// planning), their canonical JSON wire format, and the validator used by the
// verify-and-repair loop.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scenegen/backend.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/vocab.hpp"

namespace scenegen {

enum class Stage { Analysis, Retrieval, Planning };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);
// "analysis", "road retrieval", "planning"
std::string_view activation_tag(Stage s);

struct ObjectMention {
  ObjectKind kind;
  bool required = true;
  bool operator==(const ObjectMention&) const = default;
};

struct SignalMention {
  SignalKind kind = SignalKind::TrafficLight;
  bool required = true;
  bool operator==(const SignalMention&) const = default;
};

struct AgentSketch {
  AgentType type = AgentType::Car;
  LaneKind road_type = LaneKind::Driving;
  ActionKind action = ActionKind::GoStraight;
  bool operator==(const AgentSketch&) const = default;
};

struct AnalysisContext {
  std::vector<ObjectMention> objects;
  std::vector<SignalMention> signals;
  std::vector<AgentSketch> agents;
  std::vector<std::string> unknown;
  bool operator==(const AnalysisContext&) const = default;
};

struct ConditionSet {
  int number_of_lanes = 0;
  std::vector<ObjectKind> required_objects;
  std::vector<SignalKind> required_signals;
  std::vector<ObjectKind> without_objects;
  std::vector<SignalKind> without_signals;
  bool operator==(const ConditionSet&) const = default;
};

struct Environment {
  Weather weather;
  bool at_junction = false;
  bool operator==(const Environment&) const = default;
};

struct AgentPlan {
  AgentType type = AgentType::Car;
  bool is_ego = false;
  ActionKind action = ActionKind::GoStraight;
  Behavior behavior = Behavior::Normal;
  int pos_id = 0;
  LaneKind road_type = LaneKind::Driving;
  RelativePosition relative_to_ego = RelativePosition::None;
  std::optional<double> distance;
  bool operator==(const AgentPlan&) const = default;
};

struct ScenePlan {
  Environment env;
  std::vector<AgentPlan> agents;
  bool operator==(const ScenePlan&) const = default;

  // Index of the single ego; throws std::logic_error when the plan has none.
  std::size_t ego_index() const;
  const AgentPlan& ego() const { return agents[ego_index()]; }
};

// Pedestrians cannot turn or change lane; motor vehicles cannot cross the
// road or walk the sidewalk. Cyclists may do either.
bool action_allowed(AgentType type, ActionKind action);

// A vehicle listed in front of an ego that turns left at a junction, and that
// itself turns or goes straight, is read as oncoming traffic from the road
// straight across.
bool is_oncoming(const ScenePlan& plan, std::size_t index);

enum class Problem { MissingKey, UnknownKey, BadType, BadValue, CrossField };

std::string_view to_string(Problem p);

struct Diagnostic {
  std::string path;
  Problem problem = Problem::BadValue;
  std::string message;
  bool operator==(const Diagnostic&) const = default;
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
  bool operator==(const ValidationReport&) const = default;
};

nlohmann::json to_json(const Diagnostic& d);
nlohmann::json to_json(const ValidationReport& r);
// One diagnostic per line, "path: problem: message".
std::string format_diagnostics(const ValidationReport& r);

// Rewrites bare True/False/None tokens outside of strings to JSON literals.
std::string normalize_literals(std::string_view text);
// Extracts the JSON object from raw backend text. Leading reasoning text and
// code fences are skipped. Returns nullopt when nothing parses.
std::optional<nlohmann::json> extract_payload(std::string_view text);

ValidationReport validate(Stage stage, const nlohmann::json& payload);
ValidationReport validate(Stage stage, std::string_view raw_text);

nlohmann::json to_json(const AnalysisContext& v);
nlohmann::json to_json(const ConditionSet& v);
nlohmann::json to_json(const ScenePlan& v);
nlohmann::json to_json(const AgentPlan& v);

// These validate first and throw SerializationError listing the diagnostics.
AnalysisContext analysis_from_json(const nlohmann::json& j);
ConditionSet conditions_from_json(const nlohmann::json& j);
ScenePlan plan_from_json(const nlohmann::json& j);

struct RepairExhaustedError : Error {
  RepairExhaustedError(Stage stage, int attempts, ValidationReport report);
  Stage stage;
  int attempts;
  ValidationReport report;
};

struct VerifiedPayload {
  nlohmann::json payload;
  int attempts = 0;
};

// Calls the backend until its output validates for the stage. Each retry
// carries the original prompt, the rejected output and its diagnostics.
VerifiedPayload verify_and_repair(Stage stage, const std::string& user_prompt, PlannerBackend& backend,
                                  int max_retries = 3);
VerifiedPayload verify_and_repair(Stage stage, const std::string& system_prompt, const std::string& user_prompt,
                                  PlannerBackend& backend, int max_retries = 3);

std::string repair_prompt(const std::string& user_prompt, const std::string& previous_output,
                          const ValidationReport& report);

}  // namespace scenegen
