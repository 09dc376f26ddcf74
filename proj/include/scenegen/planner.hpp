#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "scenegen/backend.hpp"
#include "scenegen/schema.hpp"

namespace scenegen {

// analysis_then_stage: an analysis call feeds its context to each later stage.
// direct: stages see the description only. The cot variants add a
// step-by-step instruction to every stage prompt.
enum class PromptMode { AnalysisThenStage, Cot, AnalysisPlusCot, Direct };

std::string_view to_string(PromptMode m);
std::optional<PromptMode> parse_prompt_mode(std::string_view s);
bool uses_analysis(PromptMode m);
bool uses_cot(PromptMode m);

struct PromptRequest {
  std::string text;
  PromptMode mode = PromptMode::AnalysisThenStage;
  std::uint64_t seed = 0;
};

// User prompt for one stage: activation tag, optional CoT instruction,
// optional context JSON, then the description.
std::string build_prompt(Stage stage, const PromptRequest& request, const std::optional<AnalysisContext>& context);

struct PlannerOptions {
  int max_retries = 3;
};

AnalysisContext analyze(const PromptRequest& request, PlannerBackend& backend, PlannerOptions options = {});
ConditionSet derive_conditions(const PromptRequest& request, const std::optional<AnalysisContext>& context,
                               PlannerBackend& backend, PlannerOptions options = {});
ScenePlan plan_agents(const PromptRequest& request, const std::optional<AnalysisContext>& context,
                      PlannerBackend& backend, PlannerOptions options = {});

struct PlannerOutput {
  std::optional<AnalysisContext> context;
  ConditionSet conditions;
  ScenePlan plan;
};

// All stages in order for the request's mode.
PlannerOutput run_planner(const PromptRequest& request, PlannerBackend& backend, PlannerOptions options = {});

}  // namespace scenegen
