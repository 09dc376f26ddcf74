#include "scenegen/mock_grammar.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <variant>

namespace scenegen {

namespace {

using Tokens = std::vector<std::string>;

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (word.size() > 2 && word.ends_with("'s")) word.resize(word.size() - 2);
    if (!word.empty()) out.push_back(word);
    word.clear();
  };
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'' || c == '/') {
      word += c;
    } else {
      flush();
      if (c == ',') out.emplace_back(",");
    }
  }
  flush();
  return out;
}

std::vector<Tokens> split_sentences(std::string_view text) {
  std::vector<Tokens> out;
  std::string current;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      out.push_back(tokenize(current));
      current.clear();
    } else {
      current += c;
    }
  }
  out.push_back(tokenize(current));
  std::erase_if(out, [](const Tokens& t) { return t.empty(); });
  return out;
}

// Clauses break at "when"/"while" and before "and the ego".
std::vector<Tokens> split_clauses(const Tokens& sentence) {
  std::vector<Tokens> out(1);
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const std::string& w = sentence[i];
    const bool and_ego = w == "and" && i + 1 < sentence.size() &&
                         (sentence[i + 1] == "ego" || (sentence[i + 1] == "the" && i + 2 < sentence.size() &&
                                                       sentence[i + 2] == "ego"));
    if (w == "when" || w == "while" || and_ego) {
      if (!out.back().empty()) out.emplace_back();
      continue;
    }
    out.back().push_back(w);
  }
  std::erase_if(out, [](const Tokens& t) { return t.empty(); });
  return out;
}

template <class V>
struct Phrase {
  Tokens words;
  V value;
};

template <class V>
std::vector<Phrase<V>> phrases(std::initializer_list<std::pair<const char*, V>> list) {
  std::vector<Phrase<V>> out;
  for (const auto& [text, value] : list) out.push_back({tokenize(text), value});
  std::ranges::stable_sort(out, [](const auto& a, const auto& b) { return a.words.size() > b.words.size(); });
  return out;
}

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// A clause with a mask of consumed tokens.
struct Clause {
  Tokens words;
  std::vector<bool> used;
  explicit Clause(Tokens t) : words(std::move(t)), used(words.size(), false) {}

  bool matches(std::size_t at, const Tokens& phrase) const {
    if (at + phrase.size() > words.size()) return false;
    for (std::size_t k = 0; k < phrase.size(); ++k)
      if (used[at + k] || words[at + k] != phrase[k]) return false;
    return true;
  }

  void consume(Span s) {
    for (std::size_t k = s.begin; k < s.end; ++k) used[k] = true;
  }

  // Every occurrence of any phrase inside [lo, hi), longest phrases first,
  // consuming what matched.
  template <class V>
  std::vector<std::pair<Span, V>> take_all(const std::vector<Phrase<V>>& table, std::size_t lo = 0,
                                           std::size_t hi = std::string::npos) {
    hi = std::min(hi, words.size());
    std::vector<std::pair<Span, V>> found;
    for (const auto& p : table)
      for (std::size_t i = lo; i + p.words.size() <= hi; ++i)
        if (matches(i, p.words)) {
          Span s{i, i + p.words.size()};
          consume(s);
          found.emplace_back(s, p.value);
        }
    std::ranges::sort(found, [](const auto& a, const auto& b) { return a.first.begin < b.first.begin; });
    return found;
  }
};

struct Mention {
  std::variant<SignalKind, ObjectKind> kind;
  bool required = true;
};

const auto kSignals = phrases<SignalKind>({{"traffic light", SignalKind::TrafficLight},
                                           {"traffic lights", SignalKind::TrafficLight},
                                           {"traffic signal", SignalKind::TrafficLight},
                                           {"traffic signals", SignalKind::TrafficLight},
                                           {"stop sign", SignalKind::StopSign},
                                           {"stop signs", SignalKind::StopSign},
                                           {"yield sign", SignalKind::YieldSign},
                                           {"yield signs", SignalKind::YieldSign},
                                           {"give way sign", SignalKind::YieldSign}});

ObjectKind object(ObjectType t) { return ObjectKind{t, std::nullopt}; }

const auto kObjects = phrases<ObjectKind>({
    {"stop sign on road", object(ObjectType::StopSignOnRoad)},
    {"stop sign on the road", object(ObjectType::StopSignOnRoad)},
    {"stop signs on road", object(ObjectType::StopSignOnRoad)},
    {"stop signs on the road", object(ObjectType::StopSignOnRoad)},
    {"stop line", object(ObjectType::StopLine)},
    {"stop lines", object(ObjectType::StopLine)},
    {"ladder crosswalk", object(ObjectType::LadderCrosswalk)},
    {"continental crosswalk", object(ObjectType::ContinentalCrosswalk)},
    {"dashed single white crosswalk", object(ObjectType::DashedSingleWhiteCrosswalk)},
    {"solid single white crosswalk", object(ObjectType::SolidSingleWhiteCrosswalk)},
    {"simple crosswalk", object(ObjectType::SimpleCrosswalk)},
});

const auto kSpeed = phrases<int>({{"speed sign", 0}, {"speed limit", 0}, {"speed signs", 0}, {"speed limit sign", 0}});

const auto kCrosswalk = phrases<int>({{"crosswalk", 0}, {"crosswalks", 0}});

// Scene things the vocabulary cannot express.
const auto kUnknown = phrases<int>({{"puddle", 0},        {"puddles", 0},      {"pothole", 0},   {"potholes", 0},
                                    {"traffic cone", 0},  {"traffic cones", 0}, {"cones", 0},     {"construction", 0},
                                    {"roadwork", 0},      {"roadworks", 0},     {"debris", 0},    {"barrier", 0},
                                    {"barriers", 0},      {"deer", 0},          {"dog", 0},       {"animal", 0},
                                    {"animals", 0},       {"tram", 0},          {"train", 0},     {"scooter", 0},
                                    {"wheelchair", 0},    {"horse", 0},         {"van", 0},       {"tractor", 0}});

struct TypeWord {
  AgentType type;
  bool plural;
};

const auto kTypes = phrases<TypeWord>({
    {"police car", {AgentType::Police, false}},       {"police cars", {AgentType::Police, true}},
    {"police", {AgentType::Police, false}},           {"fire truck", {AgentType::Firetruck, false}},
    {"fire trucks", {AgentType::Firetruck, true}},    {"firetruck", {AgentType::Firetruck, false}},
    {"firetrucks", {AgentType::Firetruck, true}},     {"fire engine", {AgentType::Firetruck, false}},
    {"ambulance", {AgentType::Ambulance, false}},     {"ambulances", {AgentType::Ambulance, true}},
    {"bus", {AgentType::Bus, false}},                 {"buses", {AgentType::Bus, true}},
    {"truck", {AgentType::Truck, false}},             {"trucks", {AgentType::Truck, true}},
    {"lorry", {AgentType::Truck, false}},             {"motorcycle", {AgentType::Motorcycle, false}},
    {"motorcycles", {AgentType::Motorcycle, true}},   {"motorbike", {AgentType::Motorcycle, false}},
    {"motorbikes", {AgentType::Motorcycle, true}},    {"car", {AgentType::Car, false}},
    {"cars", {AgentType::Car, true}},                 {"vehicle", {AgentType::Car, false}},
    {"vehicles", {AgentType::Car, true}},             {"pedestrian", {AgentType::Pedestrian, false}},
    {"pedestrians", {AgentType::Pedestrian, true}},   {"person", {AgentType::Pedestrian, false}},
    {"people", {AgentType::Pedestrian, true}},        {"man", {AgentType::Pedestrian, false}},
    {"woman", {AgentType::Pedestrian, false}},        {"child", {AgentType::Pedestrian, false}},
    {"kid", {AgentType::Pedestrian, false}},          {"cyclist", {AgentType::Cyclist, false}},
    {"cyclists", {AgentType::Cyclist, true}},         {"bicycle", {AgentType::Cyclist, false}},
    {"bicycles", {AgentType::Cyclist, true}},         {"bike", {AgentType::Cyclist, false}},
    {"biker", {AgentType::Cyclist, false}},
});

enum class Place { Relative, Oncoming, Destination };

struct PlaceWord {
  Place place;
  RelativePosition rel = RelativePosition::Front;
};

// Matched before actions so "left turn" inside them is not read as a turn.
const auto kRoads = phrases<PlaceWord>({
    {"road of left turn", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"left-turn road", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"left turn road", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"left-turn lane", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"left road", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"road on the left", {Place::Relative, RelativePosition::RoadOfLeftTurn}},
    {"road of right turn", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"right-turn road", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"right turn road", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"right-turn lane", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"right road", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"road on the right", {Place::Relative, RelativePosition::RoadOfRightTurn}},
    {"opposite straight", {Place::Oncoming}},
    {"opposite direction", {Place::Oncoming}},
    {"from the straight", {Place::Oncoming}},
    {"oncoming", {Place::Oncoming}},
    {"opposite", {Place::Oncoming}},
    {"destination", {Place::Destination}},
});

const auto kRelatives = phrases<RelativePosition>({
    {"front left", RelativePosition::FrontLeft},   {"left front", RelativePosition::FrontLeft},
    {"front-left", RelativePosition::FrontLeft},   {"front right", RelativePosition::FrontRight},
    {"right front", RelativePosition::FrontRight}, {"front-right", RelativePosition::FrontRight},
    {"back left", RelativePosition::BackLeft},     {"left back", RelativePosition::BackLeft},
    {"rear left", RelativePosition::BackLeft},     {"left rear", RelativePosition::BackLeft},
    {"back right", RelativePosition::BackRight},   {"right back", RelativePosition::BackRight},
    {"rear right", RelativePosition::BackRight},   {"right rear", RelativePosition::BackRight},
});

const auto kSides = phrases<RelativePosition>({
    {"in front", RelativePosition::Front},         {"ahead", RelativePosition::Front},
    {"front", RelativePosition::Front},            {"behind", RelativePosition::Back},
    {"back", RelativePosition::Back},              {"rear", RelativePosition::Back},
    {"on the left", RelativePosition::Left},       {"to the left", RelativePosition::Left},
    {"left lane", RelativePosition::Left},         {"left side", RelativePosition::Left},
    {"on the right", RelativePosition::Right},     {"to the right", RelativePosition::Right},
    {"right lane", RelativePosition::Right},       {"right side", RelativePosition::Right},
});

enum class Act { TurnLeft, TurnRight, Straight, LaneLeft, LaneRight, LaneAny, Stop, Block, Cross, Walk, Drive };

const auto kActions = phrases<Act>({
    {"turn left", Act::TurnLeft},
    {"turns left", Act::TurnLeft},
    {"turning left", Act::TurnLeft},
    {"turned left", Act::TurnLeft},
    {"left turn", Act::TurnLeft},
    {"turn right", Act::TurnRight},
    {"turns right", Act::TurnRight},
    {"turning right", Act::TurnRight},
    {"turned right", Act::TurnRight},
    {"right turn", Act::TurnRight},
    {"go straight", Act::Straight},
    {"goes straight", Act::Straight},
    {"going straight", Act::Straight},
    {"drive straight", Act::Straight},
    {"drives straight", Act::Straight},
    {"driving straight", Act::Straight},
    {"straight", Act::Straight},
    {"change lane to left", Act::LaneLeft},
    {"change lane to the left", Act::LaneLeft},
    {"changes lane to the left", Act::LaneLeft},
    {"changing lane to the left", Act::LaneLeft},
    {"changing lanes to the left", Act::LaneLeft},
    {"changes lanes to the left", Act::LaneLeft},
    {"change lane to right", Act::LaneRight},
    {"change lane to the right", Act::LaneRight},
    {"changes lane to the right", Act::LaneRight},
    {"changing lane to the right", Act::LaneRight},
    {"changing lanes to the right", Act::LaneRight},
    {"changes lanes to the right", Act::LaneRight},
    {"change lane", Act::LaneAny},
    {"changes lane", Act::LaneAny},
    {"changing lane", Act::LaneAny},
    {"changing lanes", Act::LaneAny},
    {"cut in", Act::LaneAny},
    {"cuts in", Act::LaneAny},
    {"cutting in", Act::LaneAny},
    {"block", Act::Block},
    {"blocks", Act::Block},
    {"blocking", Act::Block},
    {"blocked", Act::Block},
    {"cross", Act::Cross},
    {"crosses", Act::Cross},
    {"crossing", Act::Cross},
    {"jaywalking", Act::Cross},
    {"walking", Act::Walk},
    {"walks", Act::Walk},
    {"walk", Act::Walk},
    {"strolling", Act::Walk},
    {"stop", Act::Stop},
    {"stops", Act::Stop},
    {"stopped", Act::Stop},
    {"stopping", Act::Stop},
    {"parked", Act::Stop},
    {"waiting", Act::Stop},
    {"does not move", Act::Stop},
    {"not moving", Act::Stop},
    {"coming", Act::Drive},
    {"driving", Act::Drive},
    {"approaching", Act::Drive},
});

const auto kLaneKinds = phrases<LaneKind>({{"sidewalk", LaneKind::Sidewalk},
                                           {"sidewalks", LaneKind::Sidewalk},
                                           {"pavement", LaneKind::Sidewalk},
                                           {"shoulder", LaneKind::Shoulder},
                                           {"hard shoulder", LaneKind::Shoulder}});

const auto kBehaviors = phrases<Behavior>({{"dangerous", Behavior::Aggressive},
                                           {"dangerously", Behavior::Aggressive},
                                           {"in a dangerous way", Behavior::Aggressive},
                                           {"aggressive", Behavior::Aggressive},
                                           {"aggressively", Behavior::Aggressive},
                                           {"reckless", Behavior::Aggressive},
                                           {"recklessly", Behavior::Aggressive},
                                           {"suddenly", Behavior::Aggressive},
                                           {"speeding", Behavior::Aggressive},
                                           {"cautious", Behavior::Cautious},
                                           {"cautiously", Behavior::Cautious},
                                           {"careful", Behavior::Cautious},
                                           {"carefully", Behavior::Cautious},
                                           {"slowly", Behavior::Cautious},
                                           {"normal", Behavior::Normal}});

const auto kAdjectives = phrases<WeatherAdjective>({{"hard rain", WeatherAdjective::HardRain},
                                                    {"heavy rain", WeatherAdjective::HardRain},
                                                    {"storm", WeatherAdjective::HardRain},
                                                    {"stormy", WeatherAdjective::HardRain},
                                                    {"downpour", WeatherAdjective::HardRain},
                                                    {"mid rain", WeatherAdjective::MidRain},
                                                    {"moderate rain", WeatherAdjective::MidRain},
                                                    {"soft rain", WeatherAdjective::SoftRain},
                                                    {"light rain", WeatherAdjective::SoftRain},
                                                    {"drizzle", WeatherAdjective::SoftRain},
                                                    {"drizzling", WeatherAdjective::SoftRain},
                                                    {"rain", WeatherAdjective::MidRain},
                                                    {"rainy", WeatherAdjective::MidRain},
                                                    {"raining", WeatherAdjective::MidRain},
                                                    {"wet cloudy", WeatherAdjective::WetCloudy},
                                                    {"wet", WeatherAdjective::Wet},
                                                    {"cloudy", WeatherAdjective::Cloudy},
                                                    {"overcast", WeatherAdjective::Cloudy},
                                                    {"clear", WeatherAdjective::Clear},
                                                    {"sunny", WeatherAdjective::Clear}});

const auto kTimes = phrases<TimeOfDay>({{"night", TimeOfDay::Night},
                                        {"nighttime", TimeOfDay::Night},
                                        {"midnight", TimeOfDay::Night},
                                        {"dark", TimeOfDay::Night},
                                        {"sunset", TimeOfDay::Sunset},
                                        {"dusk", TimeOfDay::Sunset},
                                        {"evening", TimeOfDay::Sunset},
                                        {"noon", TimeOfDay::Noon},
                                        {"midday", TimeOfDay::Noon},
                                        {"daytime", TimeOfDay::Noon},
                                        {"morning", TimeOfDay::Noon},
                                        {"afternoon", TimeOfDay::Noon}});

const std::set<std::string> kListGlue{",", "and", "or", "nor", "a", "an", "any", "the"};
const std::set<std::string> kModifierStop{",",  "and",  "or",   "the",  "a",   "an",    "with", "any", "no",
                                          "of", "at",   "on",   "near", "is",  "are",   "there", "some", "without",
                                          "by", "from", "into", "onto", "to",  "while", "in",    "across"};

std::optional<int> number_word(const std::string& w) {
  static const std::map<std::string, int> words{{"a", 1},     {"an", 1},     {"one", 1},   {"single", 1},
                                                {"two", 2},   {"three", 3},  {"four", 4},  {"five", 5},
                                                {"six", 6},   {"seven", 7},  {"eight", 8}, {"nine", 9},
                                                {"ten", 10},  {"eleven", 11}, {"twelve", 12}, {"several", 3},
                                                {"few", 3},   {"some", 2},   {"many", 11}, {"both", 2},
                                                {"couple", 2}};
  if (auto it = words.find(w); it != words.end()) return it->second;
  if (!w.empty() && std::ranges::all_of(w, [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return std::stoi(w);
  return std::nullopt;
}

// A "no"/"without" governs a mention when only list glue separates them.
bool negated(const Clause& c, std::size_t begin, const std::vector<Span>& mentions) {
  std::size_t k = begin;
  while (k > 0) {
    --k;
    const std::string& w = c.words[k];
    if (w == "no" || w == "without") return true;
    auto inside = std::ranges::find_if(mentions, [&](const Span& s) { return k >= s.begin && k < s.end; });
    if (inside != mentions.end()) {
      k = inside->begin;
      continue;
    }
    if (!kListGlue.contains(w)) return false;
  }
  return false;
}

struct Draft {
  AgentType type = AgentType::Car;
  bool ego = false;
  std::optional<Act> act;
  std::optional<RelativePosition> rel;
  std::optional<LaneKind> road;
  std::optional<Behavior> behavior;
  std::optional<double> distance;
  bool oncoming = false;
  bool destination = false;
  bool pending = false;  // created by a count phrase; may be bound by a later "the <type>"
  int group = 0;
};

struct Attributes {
  std::optional<Act> act;
  std::optional<RelativePosition> rel;
  std::optional<LaneKind> road;
  std::optional<Behavior> behavior;
  std::optional<double> distance;
  bool oncoming = false;
  bool destination = false;

  void apply_to(Draft& d) const {
    if (act) d.act = act;
    if (rel) d.rel = rel;
    if (road) d.road = road;
    if (behavior) d.behavior = behavior;
    if (distance) d.distance = distance;
    if (oncoming) {
      d.oncoming = true;
      d.rel = RelativePosition::Front;
    }
    if (destination) d.destination = true;
  }
};

std::optional<double> parse_distance(const Clause& c, std::size_t lo, std::size_t hi) {
  static const std::regex joined(R"((\d+(?:\.\d+)?)m)");
  for (std::size_t i = lo; i < hi && i < c.words.size(); ++i) {
    std::smatch m;
    if (std::regex_match(c.words[i], m, joined)) return std::stod(m[1]);
    if (i + 1 < c.words.size() && std::isdigit(static_cast<unsigned char>(c.words[i][0])) &&
        (c.words[i + 1] == "m" || c.words[i + 1] == "meters" || c.words[i + 1] == "metres" ||
         c.words[i + 1] == "meter"))
      return std::stod(c.words[i]);
  }
  return std::nullopt;
}

Attributes scan(Clause& c, std::size_t lo, std::size_t hi) {
  Attributes a;
  for (const auto& [span, place] : c.take_all(kRoads, lo, hi)) {
    if (place.place == Place::Relative) a.rel = place.rel;
    if (place.place == Place::Oncoming) a.oncoming = true;
    if (place.place == Place::Destination) a.destination = true;
  }
  if (auto acts = c.take_all(kActions, lo, hi); !acts.empty()) {
    // A specific verb beats a generic motion verb.
    auto best = std::ranges::find_if(acts, [](const auto& p) { return p.second != Act::Drive; });
    a.act = best != acts.end() ? best->second : acts.front().second;
  }
  if (auto rels = c.take_all(kRelatives, lo, hi); !rels.empty())
    a.rel = rels.front().second;
  else if (auto sides = c.take_all(kSides, lo, hi); !sides.empty())
    a.rel = sides.front().second;
  if (auto kinds = c.take_all(kLaneKinds, lo, hi); !kinds.empty()) a.road = kinds.front().second;
  if (auto b = c.take_all(kBehaviors, lo, hi); !b.empty()) a.behavior = b.front().second;
  a.distance = parse_distance(c, lo, hi);
  return a;
}

struct AgentWord {
  Span span;
  TypeWord word;
  bool after_ego = false;
};

class Reader {
 public:
  Reader(std::string_view text, std::uint64_t seed) : text_(text), seed_(seed) {
    Draft ego;
    ego.ego = true;
    drafts_.push_back(ego);
  }

  MockReading read() {
    const auto sentences = split_sentences(text_);
    for (const auto& sentence : sentences) {
      sentence_agents_.clear();
      for (const auto& clause : split_clauses(sentence)) read_clause(Clause(clause));
      if (!sentence_agents_.empty()) previous_sentence_agents_ = sentence_agents_;
    }
    scan_weather();
    return finish();
  }

 private:
  void read_clause(Clause c) {
    read_mentions(c);
    for (const auto& w : c.words)
      if (w == "intersection" || w == "junction" || w == "crossroad" || w == "crossroads" || w == "intersections")
        junction_word_ = true;

    // Agent nouns; the word after "ego" names the ego's own type.
    std::vector<AgentWord> nouns;
    for (const auto& [span, word] : c.take_all(kTypes)) {
      const bool after_ego = span.begin > 0 && c.words[span.begin - 1] == "ego";
      nouns.push_back({span, word, after_ego});
    }
    const std::size_t ego_at = position_of(c, "ego");
    const bool ego_subject = ego_at != std::string::npos && (ego_at == 0 || (ego_at == 1 && c.words[0] == "the"));

    if (ego_subject) {
      read_ego_clause(c, nouns, ego_at);
      return;
    }
    if (!c.words.empty() && c.words[0] == "both") {
      read_both_clause(c, nouns);
      return;
    }
    std::erase_if(nouns, [](const AgentWord& n) { return n.after_ego; });
    if (nouns.empty()) return;

    // Later nouns marked as stopped become agents of their own.
    std::vector<std::pair<AgentWord, Span>> secondary;
    for (std::size_t k = 1; k < nouns.size(); ++k)
      if (auto span = stopped_span(c, nouns[k].span)) secondary.emplace_back(nouns[k], *span);

    std::vector<Attributes> secondary_attrs;
    for (auto& [noun, span] : secondary) secondary_attrs.push_back(scan(c, span.begin, span.end));
    for (auto& [noun, span] : secondary) c.consume(span);

    // "A car on the left and a truck on the right are ...": each subject owns
    // the words up to the next one; a shared verb comes from the last part.
    std::vector<AgentWord> subjects{nouns.front()};
    std::vector<std::size_t> starts{0};
    for (std::size_t k = 1; k < nouns.size(); ++k) {
      if (std::ranges::any_of(secondary, [&](const auto& s) { return s.first.span.begin == nouns[k].span.begin; }))
        continue;
      const std::size_t np = phrase_start(c, nouns[k].span.begin);
      if (np > 0 && (c.words[np - 1] == "and" || c.words[np - 1] == ",")) {
        subjects.push_back(nouns[k]);
        starts.push_back(np);
      }
    }
    starts.push_back(c.words.size());
    std::vector<Attributes> parts;
    for (std::size_t k = 0; k + 1 < starts.size(); ++k) parts.push_back(scan(c, starts[k], starts[k + 1]));
    const int group = ++group_counter_;
    for (std::size_t k = 0; k < subjects.size(); ++k) {
      Attributes a = parts[k];
      if (!a.act) a.act = parts.back().act;
      add_agents(c, subjects[k], a, group);
    }
    for (std::size_t k = 0; k < secondary.size(); ++k) {
      Attributes a = secondary_attrs[k];
      if (!a.act) a.act = Act::Stop;
      add_agents(c, secondary[k].first, a, group);
    }
  }

  // First word of the noun phrase ending at a type noun.
  static std::size_t phrase_start(const Clause& c, std::size_t noun) {
    std::size_t k = noun;
    for (int skipped = 0; k > 0 && skipped < 4; ++skipped) {
      const std::string& w = c.words[k - 1];
      if (w == "and" || w == "," || w == "with" || w == "of" || w == "by") break;
      --k;
      if (w == "the" || number_word(w)) break;
    }
    return k;
  }

  static std::size_t position_of(const Clause& c, const std::string& w) {
    for (std::size_t i = 0; i < c.words.size(); ++i)
      if (c.words[i] == w) return i;
    return std::string::npos;
  }

  // Span of "[a] stopped <noun>" or "[a] <noun> stopping [on the <lane>]".
  static std::optional<Span> stopped_span(const Clause& c, Span noun) {
    static const std::set<std::string> markers{"stopped", "stopping", "parked", "waiting"};
    std::size_t begin = noun.begin;
    std::size_t end = noun.end;
    bool marked = false;
    if (begin > 0 && markers.contains(c.words[begin - 1])) {
      --begin;
      marked = true;
    }
    if (end < c.words.size() && markers.contains(c.words[end])) {
      ++end;
      marked = true;
      if (end + 2 < c.words.size() && c.words[end] == "on" && c.words[end + 1] == "the") end += 3;
    }
    if (!marked) return std::nullopt;
    if (begin > 0 && number_word(c.words[begin - 1])) --begin;
    return Span{begin, std::min(end, c.words.size())};
  }

  void read_ego_clause(Clause& c, const std::vector<AgentWord>& nouns, std::size_t ego_at) {
    Draft& ego = drafts_[0];
    ego_mentioned_ = true;
    for (const auto& n : nouns)
      if (n.after_ego && n.span.begin == ego_at + 1) ego.type = n.word.type;
    const std::size_t by = position_of(c, "by");
    const bool passive = by != std::string::npos && by > 0 && c.words[by - 1] == "blocked";
    if (passive) {
      // "the ego car is being blocked by two cars in front"
      const Attributes theirs = scan(c, by + 1, c.words.size());
      const int group = ++group_counter_;
      for (const auto& n : nouns)
        if (!n.after_ego && n.span.begin > by) {
          Attributes a = theirs;
          a.act = Act::Block;
          add_agents(c, n, a, group);
          break;
        }
      c.consume({by - 1, by});
      Attributes own = scan(c, 0, by);
      own.rel.reset();
      own.apply_to(ego);
      return;
    }
    Attributes own = scan(c, 0, c.words.size());
    own.rel.reset();
    own.oncoming = false;
    own.apply_to(ego);
  }

  void read_both_clause(Clause& c, const std::vector<AgentWord>& nouns) {
    const Attributes a = scan(c, 0, c.words.size());
    std::vector<std::size_t> targets;
    for (const auto& n : nouns) {
      if (n.after_ego) continue;
      for (std::size_t i = drafts_.size(); i-- > 1;)
        if (drafts_[i].type == n.word.type && std::ranges::find(targets, i) == targets.end()) {
          targets.push_back(i);
          break;
        }
    }
    if (targets.empty()) targets = previous_sentence_agents_;
    for (std::size_t i : targets) a.apply_to(drafts_[i]);
  }

  // Quantity before a noun, skipping up to three adjectives.
  struct Quantity {
    int count = 1;
    bool definite = false;
    bool includes_ego = false;
  };

  static Quantity quantity(const Clause& c, const AgentWord& noun) {
    Quantity q;
    q.count = noun.word.plural ? 2 : 1;
    std::size_t k = noun.span.begin;
    for (int skipped = 0; k > 0 && skipped < 4; ++skipped) {
      const std::string& w = c.words[k - 1];
      if (w == "the") {
        q.definite = true;
        break;
      }
      if (auto n = number_word(w)) {
        q.count = *n;
        if (k >= 3 && (c.words[k - 2] == "than" && (c.words[k - 3] == "more" || c.words[k - 3] == "over")))
          q.count = *n + 1;
        if (k >= 2 && c.words[k - 2] == "over") q.count = *n + 1;
        break;
      }
      --k;
    }
    for (std::size_t i = noun.span.end; i + 1 < c.words.size(); ++i)
      if (c.words[i] == "including" && (c.words[i + 1] == "ego" || (c.words[i + 1] == "the" && i + 2 < c.words.size() &&
                                                                     c.words[i + 2] == "ego")))
        q.includes_ego = true;
    return q;
  }

  void add_agents(const Clause& c, const AgentWord& noun, const Attributes& a, int group) {
    const Quantity q = quantity(c, noun);
    if (q.definite && !noun.word.plural) {
      for (std::size_t i = 1; i < drafts_.size(); ++i)
        if (drafts_[i].pending && drafts_[i].type == noun.word.type) {
          drafts_[i].pending = false;
          a.apply_to(drafts_[i]);
          sentence_agents_.push_back(i);
          return;
        }
    }
    int count = q.count;
    if (q.includes_ego) {
      ego_mentioned_ = true;
      drafts_[0].type = noun.word.type;
      --count;
    }
    for (int k = 0; k < count; ++k) {
      Draft d;
      d.type = noun.word.type;
      d.group = group;
      d.pending = count > 1 || q.includes_ego;
      a.apply_to(d);
      sentence_agents_.push_back(drafts_.size());
      drafts_.push_back(d);
    }
  }

  void read_mentions(Clause& c) {
    std::vector<std::pair<Span, std::variant<SignalKind, ObjectKind>>> found;
    for (const auto& [span, kind] : c.take_all(kObjects)) found.emplace_back(span, kind);
    for (const auto& [span, unused] : c.take_all(kSpeed)) {
      ObjectKind kind{ObjectType::SpeedSign, std::nullopt};
      std::size_t end = span.end;
      if (end < c.words.size() && c.words[end] == "of") ++end;
      if (end < c.words.size()) {
        if (auto n = number_word(c.words[end]); n && *n > 0 && c.words[end] != "a" && c.words[end] != "an") {
          kind.speed_kmh = *n;
          ++end;
        }
      }
      c.consume({span.begin, end});
      found.emplace_back(Span{span.begin, end}, kind);
    }
    for (const auto& [span, kind] : c.take_all(kSignals)) found.emplace_back(span, kind);
    for (const auto& [span, unused] : c.take_all(kCrosswalk)) {
      // Modifiers outside the vocabulary make the whole phrase unknown.
      std::size_t begin = span.begin;
      while (begin > 0 && !c.used[begin - 1] && !kModifierStop.contains(c.words[begin - 1])) --begin;
      if (begin < span.begin) {
        std::string phrase;
        for (std::size_t k = begin; k < span.end; ++k) phrase += (phrase.empty() ? "" : " ") + c.words[k];
        add_unknown(phrase);
        c.consume({begin, span.end});
        continue;
      }
      found.emplace_back(span, object(ObjectType::SimpleCrosswalk));
    }
    std::ranges::sort(found, [](const auto& a, const auto& b) { return a.first.begin < b.first.begin; });
    std::vector<Span> spans;
    for (const auto& f : found) spans.push_back(f.first);
    for (const auto& [span, kind] : found) mentions_.push_back({kind, !negated(c, span.begin, spans)});
    for (const auto& [span, unused] : c.take_all(kUnknown)) {
      std::string phrase;
      for (std::size_t k = span.begin; k < span.end; ++k) phrase += (phrase.empty() ? "" : " ") + c.words[k];
      add_unknown(phrase);
    }
  }

  void add_unknown(const std::string& phrase) {
    if (std::ranges::find(unknown_, phrase) == unknown_.end()) unknown_.push_back(phrase);
  }

  void scan_weather() {
    Clause all(tokenize(text_));
    if (auto adj = all.take_all(kAdjectives); !adj.empty()) adjective_ = adj.front().second;
    if (auto time = all.take_all(kTimes); !time.empty()) time_ = time.front().second;
  }

  Weather weather() const {
    if (!adjective_ && !time_) {
      static constexpr std::array<Weather, 4> defaults{Weather{WeatherAdjective::Clear, TimeOfDay::Noon},
                                                       Weather{WeatherAdjective::Clear, TimeOfDay::Sunset},
                                                       Weather{WeatherAdjective::Cloudy, TimeOfDay::Noon},
                                                       Weather{WeatherAdjective::Cloudy, TimeOfDay::Sunset}};
      return defaults[seed_ % defaults.size()];
    }
    return Weather{adjective_.value_or(WeatherAdjective::Clear), time_.value_or(TimeOfDay::Noon)};
  }

  static ActionKind resolve_action(const Draft& d) {
    const bool vehicle = !is_pedestrian(d.type);
    const Act act = d.act.value_or(vehicle ? Act::Straight : Act::Walk);
    switch (act) {
      case Act::TurnLeft: return vehicle ? ActionKind::TurnLeft : ActionKind::CrossRoad;
      case Act::TurnRight: return vehicle ? ActionKind::TurnRight : ActionKind::CrossRoad;
      case Act::Straight:
      case Act::Drive: return vehicle ? ActionKind::GoStraight : ActionKind::OnSidewalk;
      case Act::LaneLeft: return vehicle ? ActionKind::ChangeLaneLeft : ActionKind::CrossRoad;
      case Act::LaneRight: return vehicle ? ActionKind::ChangeLaneRight : ActionKind::CrossRoad;
      case Act::LaneAny: {
        if (!vehicle) return ActionKind::CrossRoad;
        // Toward the ego's lane.
        if (d.rel && is_left_side(*d.rel)) return ActionKind::ChangeLaneRight;
        return ActionKind::ChangeLaneLeft;
      }
      case Act::Stop: return ActionKind::Stop;
      case Act::Block: return d.ego ? ActionKind::GoStraight : ActionKind::BlockEgo;
      case Act::Cross: return is_motor_vehicle(d.type) ? ActionKind::GoStraight : ActionKind::CrossRoad;
      case Act::Walk: return is_motor_vehicle(d.type) ? ActionKind::GoStraight : ActionKind::OnSidewalk;
    }
    return ActionKind::GoStraight;
  }

  static LaneKind resolve_lane(const Draft& d, ActionKind action) {
    if (d.ego) return LaneKind::Driving;
    if (action == ActionKind::OnSidewalk) return LaneKind::Sidewalk;
    if (is_motor_vehicle(d.type)) return d.road == LaneKind::Shoulder ? LaneKind::Shoulder : LaneKind::Driving;
    if (d.road) return *d.road;
    return is_pedestrian(d.type) ? LaneKind::Sidewalk : LaneKind::Driving;
  }

  MockReading finish() {
    MockReading out;
    ScenePlan& plan = out.plan;

    // Groups of several agents without a stated position spread round the ego.
    static constexpr std::array<RelativePosition, 6> kSpread{
        RelativePosition::Front,     RelativePosition::Back,           RelativePosition::FrontRight,
        RelativePosition::BackLeft,  RelativePosition::RoadOfLeftTurn, RelativePosition::RoadOfRightTurn};
    std::map<int, int> seen;
    std::map<int, int> unplaced;
    for (std::size_t i = 1; i < drafts_.size(); ++i)
      if (!drafts_[i].rel && !drafts_[i].destination) ++unplaced[drafts_[i].group];
    for (std::size_t i = 1; i < drafts_.size(); ++i) {
      Draft& d = drafts_[i];
      if (d.rel || d.destination || unplaced[d.group] < 2) continue;
      d.rel = kSpread[static_cast<std::size_t>(seen[d.group]++) % kSpread.size()];
    }

    Draft& ego_draft = drafts_[0];
    const ActionKind ego_action = resolve_action(ego_draft);
    bool turns = ego_action == ActionKind::TurnLeft || ego_action == ActionKind::TurnRight;
    bool adjacent = false;
    for (std::size_t i = 0; i < drafts_.size(); ++i) {
      Draft& d = drafts_[i];
      AgentPlan a;
      a.type = d.ego ? (is_pedestrian(d.type) ? AgentType::Car : d.type) : d.type;
      a.is_ego = d.ego;
      a.action = resolve_action(d);
      a.behavior = d.behavior.value_or(Behavior::Normal);
      a.road_type = resolve_lane(d, a.action);
      if (d.ego) {
        a.relative_to_ego = RelativePosition::None;
      } else if (d.destination) {
        a.relative_to_ego = ego_action == ActionKind::TurnLeft    ? RelativePosition::RoadOfLeftTurn
                            : ego_action == ActionKind::TurnRight ? RelativePosition::RoadOfRightTurn
                                                                  : RelativePosition::Front;
      } else {
        a.relative_to_ego = d.rel.value_or(RelativePosition::Front);
      }
      a.distance = d.distance;
      if (a.action == ActionKind::TurnLeft || a.action == ActionKind::TurnRight) turns = true;
      if (is_adjacent_road(a.relative_to_ego) || d.oncoming) adjacent = true;
      plan.agents.push_back(a);
    }
    plan.env.weather = weather();
    plan.env.at_junction = junction_word_ || turns || adjacent;
    assign_positions(plan);

    AnalysisContext& ctx = out.context;
    for (const auto& m : mentions_) {
      if (auto s = std::get_if<SignalKind>(&m.kind)) {
        SignalMention sm{*s, m.required};
        if (std::ranges::find(ctx.signals, sm) == ctx.signals.end()) ctx.signals.push_back(sm);
      } else {
        ObjectMention om{std::get<ObjectKind>(m.kind), m.required};
        if (std::ranges::find(ctx.objects, om) == ctx.objects.end()) ctx.objects.push_back(om);
      }
    }
    for (const auto& a : plan.agents)
      if (!a.is_ego || ego_mentioned_) ctx.agents.push_back({a.type, a.road_type, a.action});
    ctx.unknown = unknown_;

    ConditionSet& cs = out.conditions;
    auto add_unique = [](auto& list, const auto& v) {
      if (std::ranges::find(list, v) == list.end()) list.push_back(v);
    };
    for (const auto& s : ctx.signals) add_unique(s.required ? cs.required_signals : cs.without_signals, s.kind);
    for (const auto& o : ctx.objects) add_unique(o.required ? cs.required_objects : cs.without_objects, o.kind);
    bool left = false;
    bool right = false;
    for (std::size_t i = 0; i < plan.agents.size(); ++i) {
      const AgentPlan& a = plan.agents[i];
      if (a.is_ego) {
        left |= a.action == ActionKind::ChangeLaneLeft;
        right |= a.action == ActionKind::ChangeLaneRight;
        continue;
      }
      if (a.road_type != LaneKind::Driving || is_oncoming(plan, i)) continue;
      left |= is_left_side(a.relative_to_ego);
      right |= is_right_side(a.relative_to_ego);
    }
    cs.number_of_lanes = 1 + (left ? 1 : 0) + (right ? 1 : 0);
    return out;
  }

  // pos_id counts from the front within each road and lane kind: on the ego
  // road ahead-ranked agents come first, then level ones, then those behind.
  static void assign_positions(ScenePlan& plan) {
    struct Key {
      int road;
      LaneKind lane;
      auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::vector<std::pair<int, std::size_t>>> groups;
    for (std::size_t i = 0; i < plan.agents.size(); ++i) {
      const AgentPlan& a = plan.agents[i];
      int road = 0;
      int rank = 1;
      if (a.relative_to_ego == RelativePosition::RoadOfLeftTurn)
        road = 1;
      else if (a.relative_to_ego == RelativePosition::RoadOfRightTurn)
        road = 2;
      else if (is_oncoming(plan, i))
        road = 3;
      else
        rank = is_ahead(a.relative_to_ego) ? 0 : is_behind(a.relative_to_ego) ? 2 : 1;
      groups[{road, a.road_type}].emplace_back(rank, i);
    }
    for (auto& [key, members] : groups) {
      std::ranges::stable_sort(members, [](const auto& x, const auto& y) { return x.first < y.first; });
      for (std::size_t k = 0; k < members.size(); ++k) plan.agents[members[k].second].pos_id = static_cast<int>(k);
    }
  }

  std::string text_;
  std::uint64_t seed_;
  std::vector<Draft> drafts_;
  std::vector<Mention> mentions_;
  std::vector<std::string> unknown_;
  std::vector<std::size_t> sentence_agents_;
  std::vector<std::size_t> previous_sentence_agents_;
  std::optional<WeatherAdjective> adjective_;
  std::optional<TimeOfDay> time_;
  bool junction_word_ = false;
  bool ego_mentioned_ = false;
  int group_counter_ = 0;
};

}  // namespace

MockReading read_description(std::string_view text, std::uint64_t seed) { return Reader(text, seed).read(); }

std::string mock_reasoning(Stage stage, std::string_view text, const MockReading& reading) {
  std::ostringstream o;
  o << "Reasoning:\n";
  int n = 0;
  for (const auto& sentence : split_sentences(text)) {
    o << "Sentence " << ++n << ":";
    for (const auto& w : sentence) o << ' ' << w;
    o << "\n";
  }
  const ScenePlan& plan = reading.plan;
  for (std::size_t i = 0; i < plan.agents.size(); ++i) {
    const AgentPlan& a = plan.agents[i];
    o << "Agent " << i << " is " << (a.is_ego ? "the ego " : "a ") << to_string(a.type) << " on a "
      << to_string(a.road_type) << " lane";
    if (!a.is_ego) o << ", placed " << to_string(a.relative_to_ego) << " relative to the ego";
    if (is_oncoming(plan, i)) o << " on the opposite approach";
    o << "; it will " << to_string(a.action) << " with " << to_string(a.behavior) << " behavior, position "
      << a.pos_id << ".\n";
  }
  const ConditionSet& c = reading.conditions;
  switch (stage) {
    case Stage::Analysis:
      o << "Unknown items: " << reading.context.unknown.size() << ".\n";
      break;
    case Stage::Retrieval:
      o << "The ego road needs at least " << c.number_of_lanes << " driving lanes in the ego direction.\n";
      for (const auto& s : c.required_signals) o << "The road must have a " << to_string(s) << ".\n";
      for (const auto& s : c.without_signals) o << "The road must not have a " << to_string(s) << ".\n";
      for (const auto& x : c.required_objects) o << "The road must have a " << to_string(x) << ".\n";
      for (const auto& x : c.without_objects) o << "The road must not have a " << to_string(x) << ".\n";
      break;
    case Stage::Planning:
      o << "The weather is " << to_string(plan.env.weather) << " and the scene is "
        << (plan.env.at_junction ? "at" : "not at") << " a junction.\n";
      break;
  }
  o << "Output:\n";
  return o.str();
}

}  // namespace scenegen
