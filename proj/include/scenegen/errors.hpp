#pragma once

#include <stdexcept>
#include <string>

namespace scenegen {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(const std::string& message, long line)
      : Error("line " + std::to_string(line) + ": " + message), line(line) {}
  long line;
};

// A link or junction record points at something that is not in the file.
struct GraphConsistencyError : Error {
  GraphConsistencyError(const std::string& message, std::string road_id)
      : Error(message), road_id(std::move(road_id)) {}
  std::string road_id;
};

struct NotFoundError : Error {
  using Error::Error;
};

struct SerializationError : Error {
  using Error::Error;
};

struct EmptyPromptError : Error {
  EmptyPromptError() : Error("prompt text is empty") {}
};

struct BackendError : Error {
  using Error::Error;
};

struct SpawnError : Error {
  SpawnError(const std::string& message, int agent_index)
      : Error("agent " + std::to_string(agent_index) + ": " + message), agent_index(agent_index) {}
  int agent_index;
};

struct RangeError : Error {
  using Error::Error;
};

struct ParentNotDoneError : Error {
  using Error::Error;
};

}  // namespace scenegen
