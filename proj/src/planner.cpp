#include "scenegen/planner.hpp"

#include "scenegen/errors.hpp"
#include "scenegen/prompts.hpp"

namespace scenegen {

std::string_view to_string(PromptMode m) {
  switch (m) {
    case PromptMode::AnalysisThenStage: return "analysis_then_stage";
    case PromptMode::Cot: return "cot";
    case PromptMode::AnalysisPlusCot: return "analysis_plus_cot";
    case PromptMode::Direct: return "direct";
  }
  return "analysis_then_stage";
}

std::optional<PromptMode> parse_prompt_mode(std::string_view s) {
  for (PromptMode m : {PromptMode::AnalysisThenStage, PromptMode::Cot, PromptMode::AnalysisPlusCot, PromptMode::Direct})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

bool uses_analysis(PromptMode m) { return m == PromptMode::AnalysisThenStage || m == PromptMode::AnalysisPlusCot; }
bool uses_cot(PromptMode m) { return m == PromptMode::Cot || m == PromptMode::AnalysisPlusCot; }

std::string build_prompt(Stage stage, const PromptRequest& request, const std::optional<AnalysisContext>& context) {
  std::string out(activation_tag(stage));
  out += '\n';
  if (uses_cot(request.mode)) {
    out += cot_instruction();
    out += '\n';
  }
  if (context && stage != Stage::Analysis) {
    out += "Context:\n";
    out += to_json(*context).dump();
    out += '\n';
  }
  out += "Description:\n";
  out += request.text;
  return out;
}

namespace {

void require_text(const PromptRequest& request) {
  if (request.text.find_first_not_of(" \t\r\n") == std::string::npos) throw EmptyPromptError();
}

}  // namespace

AnalysisContext analyze(const PromptRequest& request, PlannerBackend& backend, PlannerOptions options) {
  require_text(request);
  const auto r = verify_and_repair(Stage::Analysis, build_prompt(Stage::Analysis, request, std::nullopt), backend,
                                   options.max_retries);
  return analysis_from_json(r.payload);
}

ConditionSet derive_conditions(const PromptRequest& request, const std::optional<AnalysisContext>& context,
                               PlannerBackend& backend, PlannerOptions options) {
  require_text(request);
  const auto r = verify_and_repair(Stage::Retrieval, build_prompt(Stage::Retrieval, request, context), backend,
                                   options.max_retries);
  return conditions_from_json(r.payload);
}

ScenePlan plan_agents(const PromptRequest& request, const std::optional<AnalysisContext>& context,
                      PlannerBackend& backend, PlannerOptions options) {
  require_text(request);
  const auto r = verify_and_repair(Stage::Planning, build_prompt(Stage::Planning, request, context), backend,
                                   options.max_retries);
  return plan_from_json(r.payload);
}

PlannerOutput run_planner(const PromptRequest& request, PlannerBackend& backend, PlannerOptions options) {
  require_text(request);
  PlannerOutput out;
  if (uses_analysis(request.mode)) out.context = analyze(request, backend, options);
  out.conditions = derive_conditions(request, out.context, backend, options);
  out.plan = plan_agents(request, out.context, backend, options);
  return out;
}

}  // namespace scenegen
