#pragma once

#include <string>

namespace scenegen {

// A language-model endpoint for the three planner stages. Implementations
// must tolerate concurrent calls.
class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt) = 0;
};

}  // namespace scenegen
