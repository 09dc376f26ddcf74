#pragma once

#include <string_view>

namespace scenegen {

// Role and activation protocol shared by all three stages.
std::string_view system_prompt();
// Vocabulary lists and the JSON layout of each stage's output.
std::string_view output_formats();
// Instruction appended in the chain-of-thought prompting modes.
std::string_view cot_instruction();

}  // namespace scenegen
