#include "scenegen/schema.hpp"

#include <algorithm>
#include <cctype>
#include <initializer_list>
#include <map>
#include <sstream>
#include <stdexcept>

#include "scenegen/prompts.hpp"

namespace scenegen {

using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Analysis: return "analysis";
    case Stage::Retrieval: return "retrieval";
    case Stage::Planning: return "planning";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::Analysis, Stage::Retrieval, Stage::Planning})
    if (s == to_string(st)) return st;
  return std::nullopt;
}

std::string_view activation_tag(Stage s) {
  switch (s) {
    case Stage::Analysis: return "analysis";
    case Stage::Retrieval: return "road retrieval";
    case Stage::Planning: return "planning";
  }
  return "?";
}

std::string_view to_string(Problem p) {
  switch (p) {
    case Problem::MissingKey: return "missing_key";
    case Problem::UnknownKey: return "unknown_key";
    case Problem::BadType: return "bad_type";
    case Problem::BadValue: return "bad_value";
    case Problem::CrossField: return "cross_field";
  }
  return "?";
}

std::size_t ScenePlan::ego_index() const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].is_ego) return i;
  throw std::logic_error("plan has no ego agent");
}

bool action_allowed(AgentType type, ActionKind action) {
  if (is_pedestrian(type)) return !is_vehicle_only_action(action);
  if (is_motor_vehicle(type)) return !is_pedestrian_only_action(action);
  return true;
}

bool is_oncoming(const ScenePlan& plan, std::size_t index) {
  const AgentPlan& a = plan.agents.at(index);
  if (a.is_ego || a.relative_to_ego != RelativePosition::Front || is_pedestrian(a.type)) return false;
  if (!plan.env.at_junction) return false;
  if (a.action != ActionKind::TurnLeft && a.action != ActionKind::TurnRight && a.action != ActionKind::GoStraight)
    return false;
  const auto ego = std::ranges::find_if(plan.agents, [](const AgentPlan& p) { return p.is_ego; });
  return ego != plan.agents.end() && ego->action == ActionKind::TurnLeft;
}

json to_json(const Diagnostic& d) {
  return {{"path", d.path}, {"problem", std::string(to_string(d.problem))}, {"message", d.message}};
}

json to_json(const ValidationReport& r) {
  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back(to_json(d));
  return {{"ok", r.ok()}, {"diagnostics", diags}};
}

std::string format_diagnostics(const ValidationReport& r) {
  std::string out;
  for (const auto& d : r.diagnostics) {
    out += d.path;
    out += ": ";
    out += to_string(d.problem);
    out += ": ";
    out += d.message;
    out += '\n';
  }
  return out;
}

std::string normalize_literals(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < text.size()) {
        out += text[i + 1];
        i += 2;
        continue;
      }
      if (c == '"') in_string = false;
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      ++i;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      const std::string_view word = text.substr(i, j - i);
      if (word == "True")
        out += "true";
      else if (word == "False")
        out += "false";
      else if (word == "None")
        out += "null";
      else
        out += word;
      i = j;
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

std::optional<json> extract_payload(std::string_view text) {
  const std::string normalized = normalize_literals(text);
  const auto last = normalized.rfind('}');
  if (last == std::string::npos) return std::nullopt;
  for (auto first = normalized.find('{'); first != std::string::npos && first < last;
       first = normalized.find('{', first + 1)) {
    json j = json::parse(normalized.begin() + static_cast<long>(first), normalized.begin() + static_cast<long>(last) + 1,
                         nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

namespace {

std::string quoted(const json& j) { return j.dump(); }

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

class Checker {
 public:
  ValidationReport report;

  void add(std::string path, Problem p, std::string message) {
    report.diagnostics.push_back({std::move(path), p, std::move(message)});
  }

  // Reports missing and unexpected keys. False when j is not an object.
  bool object(const json& j, const std::string& path, std::initializer_list<const char*> required,
              std::initializer_list<const char*> optional = {}) {
    if (!j.is_object()) {
      add(path, Problem::BadType, "expected an object, got " + std::string(j.type_name()));
      return false;
    }
    for (const char* key : required)
      if (!j.contains(key)) add(path + "." + key, Problem::MissingKey, std::string("required key '") + key + "' is missing");
    for (const auto& [key, value] : j.items()) {
      const auto known = [&](std::initializer_list<const char*> keys) {
        return std::ranges::any_of(keys, [&](const char* k) { return key == k; });
      };
      if (!known(required) && !known(optional))
        add(path + "." + key, Problem::UnknownKey, "unexpected key '" + key + "'");
    }
    return true;
  }

  const json* array(const json& parent, const char* key, const std::string& path) {
    if (!parent.contains(key)) return nullptr;
    const json& v = parent.at(key);
    if (!v.is_array()) {
      add(path, Problem::BadType, "expected an array, got " + std::string(v.type_name()));
      return nullptr;
    }
    return &v;
  }

  template <class Parse>
  auto enumerated(const json& parent, const char* key, const std::string& path, const char* what, Parse parse)
      -> decltype(parse(std::string_view{})) {
    if (!parent.contains(key)) return std::nullopt;
    return enumerated_value(parent.at(key), path, what, parse);
  }

  template <class Parse>
  auto enumerated_value(const json& v, const std::string& path, const char* what, Parse parse)
      -> decltype(parse(std::string_view{})) {
    if (!v.is_string()) {
      add(path, Problem::BadType, std::string("expected a ") + what + " string, got " + v.type_name());
      return std::nullopt;
    }
    auto parsed = parse(v.get<std::string>());
    if (!parsed) add(path, Problem::BadValue, quoted(v) + " is not a known " + what);
    return parsed;
  }

  std::optional<bool> boolean(const json& parent, const char* key, const std::string& path) {
    if (!parent.contains(key)) return std::nullopt;
    const json& v = parent.at(key);
    if (!v.is_boolean()) {
      add(path, Problem::BadType, "expected true or false, got " + std::string(v.type_name()));
      return std::nullopt;
    }
    return v.get<bool>();
  }

  std::optional<long> integer(const json& parent, const char* key, const std::string& path, long min) {
    if (!parent.contains(key)) return std::nullopt;
    const json& v = parent.at(key);
    if (!v.is_number_integer()) {
      add(path, Problem::BadType, "expected an integer, got " + std::string(v.type_name()));
      return std::nullopt;
    }
    const long value = v.get<long>();
    if (value < min) {
      add(path, Problem::BadValue, "must be at least " + std::to_string(min));
      return std::nullopt;
    }
    return value;
  }
};

template <class Kind, class Parse>
std::vector<std::pair<std::size_t, Kind>> mentions(Checker& c, const json& root, const char* key, const char* what,
                                                   Parse parse) {
  std::vector<std::pair<std::size_t, Kind>> out;
  const std::string path = std::string("$.") + key;
  const json* list = c.array(root, key, path);
  if (!list) return out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& item = (*list)[i];
    const std::string p = index_path(path, i);
    if (!c.object(item, p, {"name", "required"})) continue;
    auto kind = c.enumerated(item, "name", p + ".name", what, parse);
    c.boolean(item, "required", p + ".required");
    if (kind) out.emplace_back(i, *kind);
  }
  return out;
}

template <class Kind, class Parse>
std::vector<std::pair<std::size_t, Kind>> names(Checker& c, const json& root, const char* key, const char* what,
                                                Parse parse) {
  std::vector<std::pair<std::size_t, Kind>> out;
  const std::string path = std::string("$.") + key;
  const json* list = c.array(root, key, path);
  if (!list) return out;
  for (std::size_t i = 0; i < list->size(); ++i)
    if (auto kind = c.enumerated_value((*list)[i], index_path(path, i), what, parse)) out.emplace_back(i, *kind);
  return out;
}

void validate_analysis(Checker& c, const json& root) {
  if (!c.object(root, "$", {"objects", "signals", "agents", "unknown"})) return;
  mentions<ObjectKind>(c, root, "objects", "object", parse_object);
  mentions<SignalKind>(c, root, "signals", "signal", parse_signal);
  if (const json* agents = c.array(root, "agents", "$.agents")) {
    for (std::size_t i = 0; i < agents->size(); ++i) {
      const json& a = (*agents)[i];
      const std::string p = index_path("$.agents", i);
      if (!c.object(a, p, {"type", "road_type", "action"})) continue;
      auto type = c.enumerated(a, "type", p + ".type", "agent type", parse_agent_type);
      c.enumerated(a, "road_type", p + ".road_type", "road type", parse_lane_kind);
      auto action = c.enumerated(a, "action", p + ".action", "action", parse_action);
      if (type && action && !action_allowed(*type, *action))
        c.add(p + ".action", Problem::BadValue,
              std::string(to_string(*type)) + " cannot " + std::string(to_string(*action)));
    }
  }
  if (const json* unknown = c.array(root, "unknown", "$.unknown"))
    for (std::size_t i = 0; i < unknown->size(); ++i)
      if (!(*unknown)[i].is_string())
        c.add(index_path("$.unknown", i), Problem::BadType, "expected a string");
}

bool overlaps(const ObjectKind& a, const ObjectKind& b) { return a.matches(b) || b.matches(a); }

void validate_retrieval(Checker& c, const json& root) {
  if (!c.object(root, "$", {"number_of_lanes", "required_objects", "required_signals", "without_objects",
                            "without_signals"}))
    return;
  c.integer(root, "number_of_lanes", "$.number_of_lanes", 0);
  auto req_obj = names<ObjectKind>(c, root, "required_objects", "object", parse_object);
  auto req_sig = names<SignalKind>(c, root, "required_signals", "signal", parse_signal);
  auto wo_obj = names<ObjectKind>(c, root, "without_objects", "object", parse_object);
  auto wo_sig = names<SignalKind>(c, root, "without_signals", "signal", parse_signal);
  for (const auto& [i, w] : wo_obj)
    if (std::ranges::any_of(req_obj, [&](const auto& r) { return overlaps(r.second, w); }))
      c.add(index_path("$.without_objects", i), Problem::CrossField,
            to_string(w) + " is both required and excluded");
  for (const auto& [i, w] : wo_sig)
    if (std::ranges::any_of(req_sig, [&](const auto& r) { return r.second == w; }))
      c.add(index_path("$.without_signals", i), Problem::CrossField,
            std::string(to_string(w)) + " is both required and excluded");
}

// Lateral column relative to the ego and longitudinal rank (0 ahead,
// 1 level, 2 behind). Adjacent-road positions have no column.
std::optional<std::pair<int, int>> column_and_rank(RelativePosition p) {
  if (is_adjacent_road(p)) return std::nullopt;
  const int column = is_left_side(p) ? -1 : is_right_side(p) ? 1 : 0;
  const int rank = is_ahead(p) ? 0 : is_behind(p) ? 2 : 1;
  return std::pair{column, rank};
}

void validate_planning(Checker& c, const json& root) {
  if (!c.object(root, "$", {"env", "agents"})) return;
  ScenePlan plan;
  bool env_ok = false;
  if (root.contains("env")) {
    const json& env = root.at("env");
    if (c.object(env, "$.env", {"weather", "at_junction"})) {
      auto weather = c.enumerated(env, "weather", "$.env.weather", "weather", parse_weather);
      auto at_junction = c.boolean(env, "at_junction", "$.env.at_junction");
      if (weather && at_junction) {
        plan.env = {*weather, *at_junction};
        env_ok = true;
      }
    }
  }
  const json* agents = c.array(root, "agents", "$.agents");
  if (!agents) return;

  std::vector<bool> complete;
  int egos = 0;
  for (std::size_t i = 0; i < agents->size(); ++i) {
    const json& a = (*agents)[i];
    const std::string p = index_path("$.agents", i);
    AgentPlan plan_agent;
    bool ok = false;
    if (c.object(a, p, {"type", "is_ego", "action", "behavior", "pos_id", "road_type", "relative_to_ego"},
                 {"distance"})) {
      auto type = c.enumerated(a, "type", p + ".type", "agent type", parse_agent_type);
      auto is_ego = c.boolean(a, "is_ego", p + ".is_ego");
      auto action = c.enumerated(a, "action", p + ".action", "action", parse_action);
      auto behavior = c.enumerated(a, "behavior", p + ".behavior", "behavior", parse_behavior);
      auto pos_id = c.integer(a, "pos_id", p + ".pos_id", 0);
      auto road_type = c.enumerated(a, "road_type", p + ".road_type", "road type", parse_lane_kind);
      auto rel = c.enumerated(a, "relative_to_ego", p + ".relative_to_ego", "relative position",
                              parse_relative_position);
      bool distance_ok = true;
      if (a.contains("distance")) {
        const json& d = a.at("distance");
        if (!d.is_number()) {
          c.add(p + ".distance", Problem::BadType, "expected a number of meters, got " + std::string(d.type_name()));
          distance_ok = false;
        } else if (!(d.get<double>() > 0)) {
          c.add(p + ".distance", Problem::BadValue, "distance must be positive");
          distance_ok = false;
        } else {
          plan_agent.distance = d.get<double>();
        }
      }
      if (is_ego && *is_ego) ++egos;
      if (type && action && !action_allowed(*type, *action))
        c.add(p + ".action", Problem::BadValue,
              std::string(to_string(*type)) + " cannot " + std::string(to_string(*action)));
      else if (type && is_ego && action && behavior && pos_id && road_type && rel && distance_ok) {
        plan_agent.type = *type;
        plan_agent.is_ego = *is_ego;
        plan_agent.action = *action;
        plan_agent.behavior = *behavior;
        plan_agent.pos_id = static_cast<int>(*pos_id);
        plan_agent.road_type = *road_type;
        plan_agent.relative_to_ego = *rel;
        ok = true;
      }
    }
    plan.agents.push_back(plan_agent);
    complete.push_back(ok);
  }

  if (egos != 1)
    c.add("$.agents", Problem::CrossField, "exactly one ego required, found " + std::to_string(egos));

  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    if (!complete[i]) continue;
    const AgentPlan& a = plan.agents[i];
    const std::string p = index_path("$.agents", i);
    if (a.is_ego) {
      if (a.relative_to_ego != RelativePosition::None)
        c.add(p + ".relative_to_ego", Problem::CrossField, "the ego must have relative_to_ego \"none\"");
      if (is_pedestrian(a.type)) c.add(p + ".type", Problem::CrossField, "the ego cannot be a pedestrian");
      if (a.road_type != LaneKind::Driving)
        c.add(p + ".road_type", Problem::CrossField, "the ego must start on a driving lane");
      if (a.action == ActionKind::BlockEgo) c.add(p + ".action", Problem::CrossField, "the ego cannot block itself");
    } else if (a.relative_to_ego == RelativePosition::None) {
      c.add(p + ".relative_to_ego", Problem::CrossField, "only the ego may have relative_to_ego \"none\"");
    }
    if (is_motor_vehicle(a.type) && a.road_type == LaneKind::Sidewalk)
      c.add(p + ".road_type", Problem::CrossField, "motor vehicles cannot use the sidewalk");
    if (a.action == ActionKind::OnSidewalk && a.road_type != LaneKind::Sidewalk)
      c.add(p + ".road_type", Problem::CrossField, "\"on the sidewalk\" requires road_type sidewalk");
  }

  // pos_id must agree with front/level/back order inside a lane group.
  if (egos != 1 || !env_ok || !std::ranges::all_of(complete, [](bool b) { return b; })) return;
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const auto ci = column_and_rank(plan.agents[i].relative_to_ego);
    if (!ci || is_oncoming(plan, i)) continue;
    for (std::size_t j = 0; j < plan.agents.size(); ++j) {
      const auto cj = column_and_rank(plan.agents[j].relative_to_ego);
      if (i == j || !cj || is_oncoming(plan, j)) continue;
      if (ci->first != cj->first || plan.agents[i].road_type != plan.agents[j].road_type) continue;
      if (ci->second < cj->second && plan.agents[i].pos_id >= plan.agents[j].pos_id)
        c.add(index_path("$.agents", i) + ".pos_id", Problem::CrossField,
              "pos_id must be smaller than that of agents[" + std::to_string(j) + "], which is further back in the lane");
    }
  }
}

}  // namespace

ValidationReport validate(Stage stage, const json& payload) {
  Checker c;
  switch (stage) {
    case Stage::Analysis: validate_analysis(c, payload); break;
    case Stage::Retrieval: validate_retrieval(c, payload); break;
    case Stage::Planning: validate_planning(c, payload); break;
  }
  return c.report;
}

ValidationReport validate(Stage stage, std::string_view raw_text) {
  auto payload = extract_payload(raw_text);
  if (!payload) return ValidationReport{{{"$", Problem::BadType, "output does not contain a parseable JSON object"}}};
  return validate(stage, *payload);
}

json to_json(const AnalysisContext& v) {
  json objects = json::array();
  for (const auto& o : v.objects) objects.push_back({{"name", to_string(o.kind)}, {"required", o.required}});
  json signals = json::array();
  for (const auto& s : v.signals) signals.push_back({{"name", std::string(to_string(s.kind))}, {"required", s.required}});
  json agents = json::array();
  for (const auto& a : v.agents)
    agents.push_back({{"type", std::string(to_string(a.type))},
                      {"road_type", std::string(to_string(a.road_type))},
                      {"action", std::string(to_string(a.action))}});
  return {{"objects", objects}, {"signals", signals}, {"agents", agents}, {"unknown", v.unknown}};
}

json to_json(const ConditionSet& v) {
  auto objects = [](const std::vector<ObjectKind>& list) {
    json out = json::array();
    for (const auto& o : list) out.push_back(to_string(o));
    return out;
  };
  auto signals = [](const std::vector<SignalKind>& list) {
    json out = json::array();
    for (auto s : list) out.push_back(std::string(to_string(s)));
    return out;
  };
  return {{"number_of_lanes", v.number_of_lanes},
          {"required_objects", objects(v.required_objects)},
          {"required_signals", signals(v.required_signals)},
          {"without_objects", objects(v.without_objects)},
          {"without_signals", signals(v.without_signals)}};
}

json to_json(const AgentPlan& a) {
  json j{{"type", std::string(to_string(a.type))},
         {"is_ego", a.is_ego},
         {"action", std::string(to_string(a.action))},
         {"behavior", std::string(to_string(a.behavior))},
         {"pos_id", a.pos_id},
         {"road_type", std::string(to_string(a.road_type))},
         {"relative_to_ego", std::string(to_string(a.relative_to_ego))}};
  if (a.distance) j["distance"] = *a.distance;
  return j;
}

json to_json(const ScenePlan& v) {
  json agents = json::array();
  for (const auto& a : v.agents) agents.push_back(to_json(a));
  return {{"env", {{"weather", to_string(v.env.weather)}, {"at_junction", v.env.at_junction}}}, {"agents", agents}};
}

namespace {

void require_valid(Stage stage, const json& j) {
  const ValidationReport report = validate(stage, j);
  if (!report.ok())
    throw SerializationError("invalid " + std::string(to_string(stage)) + " payload:\n" + format_diagnostics(report));
}

std::string str(const json& j, const char* key) { return j.at(key).get<std::string>(); }

}  // namespace

AnalysisContext analysis_from_json(const json& j) {
  require_valid(Stage::Analysis, j);
  AnalysisContext v;
  for (const auto& o : j.at("objects")) v.objects.push_back({*parse_object(str(o, "name")), o.at("required").get<bool>()});
  for (const auto& s : j.at("signals")) v.signals.push_back({*parse_signal(str(s, "name")), s.at("required").get<bool>()});
  for (const auto& a : j.at("agents"))
    v.agents.push_back(
        {*parse_agent_type(str(a, "type")), *parse_lane_kind(str(a, "road_type")), *parse_action(str(a, "action"))});
  for (const auto& u : j.at("unknown")) v.unknown.push_back(u.get<std::string>());
  return v;
}

ConditionSet conditions_from_json(const json& j) {
  require_valid(Stage::Retrieval, j);
  ConditionSet v;
  v.number_of_lanes = j.at("number_of_lanes").get<int>();
  for (const auto& o : j.at("required_objects")) v.required_objects.push_back(*parse_object(o.get<std::string>()));
  for (const auto& s : j.at("required_signals")) v.required_signals.push_back(*parse_signal(s.get<std::string>()));
  for (const auto& o : j.at("without_objects")) v.without_objects.push_back(*parse_object(o.get<std::string>()));
  for (const auto& s : j.at("without_signals")) v.without_signals.push_back(*parse_signal(s.get<std::string>()));
  return v;
}

ScenePlan plan_from_json(const json& j) {
  require_valid(Stage::Planning, j);
  ScenePlan v;
  v.env.weather = *parse_weather(str(j.at("env"), "weather"));
  v.env.at_junction = j.at("env").at("at_junction").get<bool>();
  for (const auto& a : j.at("agents")) {
    AgentPlan p;
    p.type = *parse_agent_type(str(a, "type"));
    p.is_ego = a.at("is_ego").get<bool>();
    p.action = *parse_action(str(a, "action"));
    p.behavior = *parse_behavior(str(a, "behavior"));
    p.pos_id = a.at("pos_id").get<int>();
    p.road_type = *parse_lane_kind(str(a, "road_type"));
    p.relative_to_ego = *parse_relative_position(str(a, "relative_to_ego"));
    if (a.contains("distance")) p.distance = a.at("distance").get<double>();
    v.agents.push_back(p);
  }
  return v;
}

RepairExhaustedError::RepairExhaustedError(Stage stage, int attempts, ValidationReport report)
    : Error(std::string(to_string(stage)) + " output failed verification after " + std::to_string(attempts) +
            " attempts:\n" + format_diagnostics(report)),
      stage(stage),
      attempts(attempts),
      report(std::move(report)) {}

std::string repair_prompt(const std::string& user_prompt, const std::string& previous_output,
                          const ValidationReport& report) {
  std::ostringstream o;
  o << user_prompt << "\n\nYour previous output was rejected.\nPrevious output:\n"
    << previous_output << "\nDiagnostics:\n"
    << format_diagnostics(report) << "Return the corrected output only.";
  return o.str();
}

VerifiedPayload verify_and_repair(Stage stage, const std::string& system, const std::string& user_prompt,
                                  PlannerBackend& backend, int max_retries) {
  if (max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
  std::string request = user_prompt;
  ValidationReport report;
  for (int attempt = 1; attempt <= max_retries + 1; ++attempt) {
    const std::string output = backend.complete(system, request);
    report = validate(stage, std::string_view(output));
    if (report.ok()) return {*extract_payload(output), attempt};
    request = repair_prompt(user_prompt, output, report);
  }
  throw RepairExhaustedError(stage, max_retries + 1, report);
}

VerifiedPayload verify_and_repair(Stage stage, const std::string& user_prompt, PlannerBackend& backend,
                                  int max_retries) {
  const std::string system = std::string(system_prompt()) + "\n\n" + std::string(output_formats());
  return verify_and_repair(stage, system, user_prompt, backend, max_retries);
}

}  // namespace scenegen
