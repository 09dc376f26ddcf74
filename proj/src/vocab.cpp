#include "scenegen/vocab.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <utility>

namespace scenegen {
namespace {

template <typename E, std::size_t N>
using Table = std::array<std::pair<E, std::string_view>, N>;

constexpr Table<AgentType, 9> kAgentTypes{{{AgentType::Ambulance, "ambulance"},
                                           {AgentType::Police, "police"},
                                           {AgentType::Firetruck, "firetruck"},
                                           {AgentType::Bus, "bus"},
                                           {AgentType::Truck, "truck"},
                                           {AgentType::Motorcycle, "motorcycle"},
                                           {AgentType::Car, "car"},
                                           {AgentType::Pedestrian, "pedestrian"},
                                           {AgentType::Cyclist, "cyclist"}}};

constexpr Table<ActionKind, 9> kActions{{{ActionKind::TurnLeft, "turn left"},
                                         {ActionKind::TurnRight, "turn right"},
                                         {ActionKind::GoStraight, "go straight"},
                                         {ActionKind::ChangeLaneLeft, "change lane to left"},
                                         {ActionKind::ChangeLaneRight, "change lane to right"},
                                         {ActionKind::Stop, "stop"},
                                         {ActionKind::BlockEgo, "block the ego"},
                                         {ActionKind::CrossRoad, "cross the road"},
                                         {ActionKind::OnSidewalk, "on the sidewalk"}}};

constexpr Table<Behavior, 3> kBehaviors{
    {{Behavior::Cautious, "cautious"}, {Behavior::Normal, "normal"}, {Behavior::Aggressive, "aggressive"}}};

constexpr Table<RelativePosition, 11> kRelative{{{RelativePosition::Front, "front"},
                                                 {RelativePosition::Back, "back"},
                                                 {RelativePosition::Left, "left"},
                                                 {RelativePosition::Right, "right"},
                                                 {RelativePosition::FrontLeft, "front left"},
                                                 {RelativePosition::FrontRight, "front right"},
                                                 {RelativePosition::BackLeft, "back left"},
                                                 {RelativePosition::BackRight, "back right"},
                                                 {RelativePosition::RoadOfLeftTurn, "road of left turn"},
                                                 {RelativePosition::RoadOfRightTurn, "road of right turn"},
                                                 {RelativePosition::None, "none"}}};

constexpr Table<LaneKind, 3> kLaneKinds{
    {{LaneKind::Driving, "driving"}, {LaneKind::Sidewalk, "sidewalk"}, {LaneKind::Shoulder, "shoulder"}}};

constexpr Table<SignalKind, 3> kSignals{{{SignalKind::TrafficLight, "traffic light"},
                                         {SignalKind::StopSign, "stop sign"},
                                         {SignalKind::YieldSign, "yield sign"}}};

constexpr Table<ObjectType, 8> kObjects{{{ObjectType::SpeedSign, "speed sign"},
                                         {ObjectType::SimpleCrosswalk, "simple crosswalk"},
                                         {ObjectType::LadderCrosswalk, "ladder crosswalk"},
                                         {ObjectType::ContinentalCrosswalk, "continental crosswalk"},
                                         {ObjectType::DashedSingleWhiteCrosswalk, "dashed single white crosswalk"},
                                         {ObjectType::SolidSingleWhiteCrosswalk, "solid single white crosswalk"},
                                         {ObjectType::StopLine, "stop line"},
                                         {ObjectType::StopSignOnRoad, "stop sign on road"}}};

constexpr Table<Turn, 3> kTurns{{{Turn::Left, "left"}, {Turn::Right, "right"}, {Turn::Straight, "straight"}}};

constexpr Table<WeatherAdjective, 7> kWeatherAdjectives{{{WeatherAdjective::Clear, "clear"},
                                                         {WeatherAdjective::Cloudy, "cloudy"},
                                                         {WeatherAdjective::HardRain, "hard rain"},
                                                         {WeatherAdjective::MidRain, "mid rain"},
                                                         {WeatherAdjective::SoftRain, "soft rain"},
                                                         {WeatherAdjective::WetCloudy, "wet cloudy"},
                                                         {WeatherAdjective::Wet, "wet"}}};

constexpr Table<TimeOfDay, 3> kTimes{
    {{TimeOfDay::Night, "night"}, {TimeOfDay::Noon, "noon"}, {TimeOfDay::Sunset, "sunset"}}};

template <typename E, std::size_t N>
std::string_view lookup(const Table<E, N>& table, E v) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

// Lower-case, trim and collapse inner whitespace runs to one space.
std::string normalize(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

template <typename E, std::size_t N>
std::optional<E> reverse_lookup(const Table<E, N>& table, std::string_view s) {
  const std::string key = normalize(s);
  for (const auto& [e, name] : table)
    if (name == key) return e;
  return std::nullopt;
}

template <typename E, std::size_t N>
struct Values {
  constexpr explicit Values(const Table<E, N>& table) {
    for (std::size_t i = 0; i < N; ++i) items[i] = table[i].first;
  }
  std::array<E, N> items{};
};

constexpr Values kAgentTypeValues{kAgentTypes};
constexpr Values kActionValues{kActions};
constexpr Values kBehaviorValues{kBehaviors};
constexpr Values kRelativeValues{kRelative};
constexpr Values kLaneKindValues{kLaneKinds};
constexpr Values kSignalValues{kSignals};
constexpr Values kObjectValues{kObjects};
constexpr Values kAdjectiveValues{kWeatherAdjectives};
constexpr Values kTimeValues{kTimes};

}  // namespace

bool ObjectKind::matches(const ObjectKind& present) const {
  if (type != present.type) return false;
  if (type != ObjectType::SpeedSign || !speed_kmh) return true;
  return speed_kmh == present.speed_kmh;
}

double Weather::friction() const {
  switch (adjective) {
    case WeatherAdjective::HardRain: return 0.6;
    case WeatherAdjective::MidRain: return 0.7;
    case WeatherAdjective::SoftRain: return 0.8;
    case WeatherAdjective::Wet:
    case WeatherAdjective::WetCloudy: return 0.85;
    case WeatherAdjective::Clear:
    case WeatherAdjective::Cloudy: return 1.0;
  }
  return 1.0;
}

std::string_view to_string(AgentType v) { return lookup(kAgentTypes, v); }
std::string_view to_string(ActionKind v) { return lookup(kActions, v); }
std::string_view to_string(Behavior v) { return lookup(kBehaviors, v); }
std::string_view to_string(RelativePosition v) { return lookup(kRelative, v); }
std::string_view to_string(LaneKind v) { return lookup(kLaneKinds, v); }
std::string_view to_string(SignalKind v) { return lookup(kSignals, v); }
std::string_view to_string(ObjectType v) { return lookup(kObjects, v); }
std::string_view to_string(Turn v) { return lookup(kTurns, v); }
std::string_view to_string(WeatherAdjective v) { return lookup(kWeatherAdjectives, v); }
std::string_view to_string(TimeOfDay v) { return lookup(kTimes, v); }

std::string to_string(const ObjectKind& v) {
  std::string out{to_string(v.type)};
  if (v.type == ObjectType::SpeedSign && v.speed_kmh) out += " of " + std::to_string(*v.speed_kmh);
  return out;
}

std::string to_string(const Weather& v) {
  return std::string{to_string(v.adjective)} + " " + std::string{to_string(v.time)};
}

std::optional<AgentType> parse_agent_type(std::string_view s) { return reverse_lookup(kAgentTypes, s); }
std::optional<ActionKind> parse_action(std::string_view s) { return reverse_lookup(kActions, s); }
std::optional<Behavior> parse_behavior(std::string_view s) { return reverse_lookup(kBehaviors, s); }
std::optional<RelativePosition> parse_relative_position(std::string_view s) { return reverse_lookup(kRelative, s); }
std::optional<LaneKind> parse_lane_kind(std::string_view s) { return reverse_lookup(kLaneKinds, s); }
std::optional<SignalKind> parse_signal(std::string_view s) { return reverse_lookup(kSignals, s); }
std::optional<Turn> parse_turn(std::string_view s) { return reverse_lookup(kTurns, s); }

std::optional<ObjectKind> parse_object(std::string_view s) {
  const std::string key = normalize(s);
  if (auto t = reverse_lookup(kObjects, key)) return ObjectKind{*t, std::nullopt};
  constexpr std::string_view prefix = "speed sign of ";
  if (!key.starts_with(prefix)) return std::nullopt;
  const std::string_view digits = std::string_view{key}.substr(prefix.size());
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || value <= 0) return std::nullopt;
  return ObjectKind{ObjectType::SpeedSign, value};
}

std::optional<Weather> parse_weather(std::string_view s) {
  const std::string key = normalize(s);
  const auto space = key.rfind(' ');
  if (space == std::string::npos) return std::nullopt;
  auto adjective = reverse_lookup(kWeatherAdjectives, std::string_view{key}.substr(0, space));
  auto time = reverse_lookup(kTimes, std::string_view{key}.substr(space + 1));
  if (!adjective || !time) return std::nullopt;
  return Weather{*adjective, *time};
}

std::span<const AgentType> all_agent_types() { return kAgentTypeValues.items; }
std::span<const ActionKind> all_actions() { return kActionValues.items; }
std::span<const Behavior> all_behaviors() { return kBehaviorValues.items; }
std::span<const RelativePosition> all_relative_positions() { return kRelativeValues.items; }
std::span<const LaneKind> all_lane_kinds() { return kLaneKindValues.items; }
std::span<const SignalKind> all_signals() { return kSignalValues.items; }
std::span<const ObjectType> all_object_types() { return kObjectValues.items; }
std::span<const WeatherAdjective> all_weather_adjectives() { return kAdjectiveValues.items; }
std::span<const TimeOfDay> all_times_of_day() { return kTimeValues.items; }

bool is_pedestrian(AgentType t) { return t == AgentType::Pedestrian; }

bool is_motor_vehicle(AgentType t) { return t != AgentType::Pedestrian && t != AgentType::Cyclist; }

bool is_vehicle_only_action(ActionKind a) {
  return a == ActionKind::TurnLeft || a == ActionKind::TurnRight || a == ActionKind::ChangeLaneLeft ||
         a == ActionKind::ChangeLaneRight;
}

bool is_pedestrian_only_action(ActionKind a) { return a == ActionKind::CrossRoad || a == ActionKind::OnSidewalk; }

std::optional<Turn> turn_of(ActionKind a) {
  switch (a) {
    case ActionKind::TurnLeft: return Turn::Left;
    case ActionKind::TurnRight: return Turn::Right;
    case ActionKind::GoStraight: return Turn::Straight;
    default: return std::nullopt;
  }
}

bool is_left_side(RelativePosition p) {
  return p == RelativePosition::Left || p == RelativePosition::FrontLeft || p == RelativePosition::BackLeft;
}

bool is_right_side(RelativePosition p) {
  return p == RelativePosition::Right || p == RelativePosition::FrontRight || p == RelativePosition::BackRight;
}

bool is_ahead(RelativePosition p) {
  return p == RelativePosition::Front || p == RelativePosition::FrontLeft || p == RelativePosition::FrontRight;
}

bool is_behind(RelativePosition p) {
  return p == RelativePosition::Back || p == RelativePosition::BackLeft || p == RelativePosition::BackRight;
}

bool is_adjacent_road(RelativePosition p) {
  return p == RelativePosition::RoadOfLeftTurn || p == RelativePosition::RoadOfRightTurn;
}

}  // namespace scenegen
