#pragma once

// Closed vocabularies shared by the road graph, the stage schemas and the
// simulator. Every enumeration has exactly one canonical wire string.

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace scenegen {

enum class AgentType { Ambulance, Police, Firetruck, Bus, Truck, Motorcycle, Car, Pedestrian, Cyclist };

enum class ActionKind {
  TurnLeft,
  TurnRight,
  GoStraight,
  ChangeLaneLeft,
  ChangeLaneRight,
  Stop,
  BlockEgo,
  CrossRoad,
  OnSidewalk
};

enum class Behavior { Cautious, Normal, Aggressive };

enum class RelativePosition {
  Front,
  Back,
  Left,
  Right,
  FrontLeft,
  FrontRight,
  BackLeft,
  BackRight,
  RoadOfLeftTurn,
  RoadOfRightTurn,
  None
};

enum class LaneKind { Driving, Sidewalk, Shoulder };

enum class SignalKind { TrafficLight, StopSign, YieldSign };

enum class ObjectType {
  SpeedSign,
  SimpleCrosswalk,
  LadderCrosswalk,
  ContinentalCrosswalk,
  DashedSingleWhiteCrosswalk,
  SolidSingleWhiteCrosswalk,
  StopLine,
  StopSignOnRoad
};

enum class Turn { Left, Right, Straight };

enum class WeatherAdjective { Clear, Cloudy, HardRain, MidRain, SoftRain, WetCloudy, Wet };
enum class TimeOfDay { Night, Noon, Sunset };

// Speed signs carry a value in km/h. On the map it is always set; in a
// retrieval condition a speed sign without value matches any speed sign.
struct ObjectKind {
  ObjectType type = ObjectType::SimpleCrosswalk;
  std::optional<int> speed_kmh;

  auto operator<=>(const ObjectKind&) const = default;
  bool matches(const ObjectKind& present) const;
};

struct Weather {
  WeatherAdjective adjective = WeatherAdjective::Clear;
  TimeOfDay time = TimeOfDay::Noon;

  auto operator<=>(const Weather&) const = default;
  // Multiplier on braking limits; rain and wet surfaces reduce grip.
  double friction() const;
};

std::string_view to_string(AgentType v);
std::string_view to_string(ActionKind v);
std::string_view to_string(Behavior v);
std::string_view to_string(RelativePosition v);
std::string_view to_string(LaneKind v);
std::string_view to_string(SignalKind v);
std::string_view to_string(ObjectType v);
std::string_view to_string(Turn v);
std::string_view to_string(WeatherAdjective v);
std::string_view to_string(TimeOfDay v);
std::string to_string(const ObjectKind& v);
std::string to_string(const Weather& v);

std::optional<AgentType> parse_agent_type(std::string_view s);
std::optional<ActionKind> parse_action(std::string_view s);
std::optional<Behavior> parse_behavior(std::string_view s);
std::optional<RelativePosition> parse_relative_position(std::string_view s);
std::optional<LaneKind> parse_lane_kind(std::string_view s);
std::optional<SignalKind> parse_signal(std::string_view s);
std::optional<ObjectKind> parse_object(std::string_view s);
std::optional<Turn> parse_turn(std::string_view s);
std::optional<Weather> parse_weather(std::string_view s);

std::span<const AgentType> all_agent_types();
std::span<const ActionKind> all_actions();
std::span<const Behavior> all_behaviors();
std::span<const RelativePosition> all_relative_positions();
std::span<const LaneKind> all_lane_kinds();
std::span<const SignalKind> all_signals();
std::span<const ObjectType> all_object_types();
std::span<const WeatherAdjective> all_weather_adjectives();
std::span<const TimeOfDay> all_times_of_day();

bool is_pedestrian(AgentType t);
// Motorised vehicles; cyclists are neither pedestrian nor motor vehicle.
bool is_motor_vehicle(AgentType t);
bool is_vehicle_only_action(ActionKind a);
bool is_pedestrian_only_action(ActionKind a);
std::optional<Turn> turn_of(ActionKind a);

bool is_left_side(RelativePosition p);
bool is_right_side(RelativePosition p);
bool is_ahead(RelativePosition p);
bool is_behind(RelativePosition p);
bool is_adjacent_road(RelativePosition p);

}  // namespace scenegen
