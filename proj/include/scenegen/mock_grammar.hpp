#pragma once

// Small pattern grammar that reads a scene description the way the planner
// stages would: counts, agent types, relative positions, actions, behaviors,
// weather and "no <signal/object>" filters.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scenegen/schema.hpp"

namespace scenegen {

struct MockReading {
  AnalysisContext context;
  ConditionSet conditions;
  ScenePlan plan;
};

MockReading read_description(std::string_view text, std::uint64_t seed = 0);

// Step-by-step text the mock writes ahead of its output in CoT modes.
std::string mock_reasoning(Stage stage, std::string_view text, const MockReading& reading);

}  // namespace scenegen
