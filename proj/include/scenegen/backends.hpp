#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/backend.hpp"
#include "scenegen/schema.hpp"

namespace scenegen {

// Stage named by the activation tag on the first line of a user prompt.
std::optional<Stage> stage_of_prompt(const std::string& user_prompt);

// Offline backend driven by the rule grammar in mock_grammar.hpp. Output is a
// pure function of the prompts and the seed.
class MockBackend : public PlannerBackend {
 public:
  explicit MockBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;

 private:
  std::uint64_t seed_;
};

// Returns canned responses in order; throws BackendError once they run out.
class ScriptedBackend : public PlannerBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses);
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;
  std::vector<std::string> requests() const;

 private:
  mutable std::mutex mu_;
  std::deque<std::string> responses_;
  std::vector<std::string> requests_;
};

struct TranscriptRecord {
  std::string stage;
  std::string request;
  std::string response;
};

std::vector<TranscriptRecord> read_transcript(std::istream& in);
std::vector<TranscriptRecord> load_transcript(const std::filesystem::path& path);

// Answers from a recorded JSONL transcript. A request is matched by stage and
// exact prompt text; each record is used once.
class ReplayBackend : public PlannerBackend {
 public:
  explicit ReplayBackend(std::vector<TranscriptRecord> records);
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;

 private:
  std::mutex mu_;
  std::vector<TranscriptRecord> records_;
  std::vector<bool> used_;
};

// Forwards to another backend and appends each exchange to a JSONL stream.
class RecordingBackend : public PlannerBackend {
 public:
  RecordingBackend(PlannerBackend& inner, std::ostream& out) : inner_(inner), out_(out) {}
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;

 private:
  PlannerBackend& inner_;
  std::ostream& out_;
  std::mutex mu_;
};

// Rough token estimate: one token per four characters, rounded up.
std::size_t estimate_tokens(std::string_view text);

// Counts calls and estimated tokens (user prompt plus response) on the way
// through to another backend.
class MeteredBackend : public PlannerBackend {
 public:
  explicit MeteredBackend(PlannerBackend& inner) : inner_(inner) {}
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;
  std::size_t calls() const { return calls_; }
  std::size_t tokens() const { return tokens_; }

 private:
  PlannerBackend& inner_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> tokens_{0};
};

struct RemoteConfig {
  std::string endpoint;  // base URL, e.g. http://host:8000/v1
  std::string api_key;
  std::string model;
  double timeout_s = 60.0;
  double temperature = 0.0;

  // SCENEGEN_ENDPOINT, SCENEGEN_API_KEY, SCENEGEN_MODEL
  static RemoteConfig from_env();
};

// OpenAI-style chat-completions client.
class RemoteBackend : public PlannerBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;

 private:
  RemoteConfig config_;
  std::string origin_;
  std::string path_;
};

// "mock", "remote", or "replay:<path>"
std::unique_ptr<PlannerBackend> make_backend(const std::string& spec, std::uint64_t seed);

}  // namespace scenegen
