#include "scenegen/backends.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <istream>
#include "json.hpp"
#include <ostream>

#include "scenegen/errors.hpp"
#include "scenegen/mock_grammar.hpp"
#include "scenegen/prompts.hpp"

namespace scenegen {

using nlohmann::json;

std::optional<Stage> stage_of_prompt(const std::string& user_prompt) {
  const std::string first = user_prompt.substr(0, user_prompt.find('\n'));
  for (Stage s : {Stage::Analysis, Stage::Retrieval, Stage::Planning})
    if (first == activation_tag(s)) return s;
  return std::nullopt;
}

namespace {

constexpr std::string_view kDescription = "Description:\n";
constexpr std::string_view kRetry = "\n\nYour previous output was rejected.";

std::string description_of(const std::string& user_prompt) {
  std::size_t at = user_prompt.find(kDescription);
  std::string text = at == std::string::npos ? user_prompt : user_prompt.substr(at + kDescription.size());
  if (auto cut = text.find(kRetry); cut != std::string::npos) text.resize(cut);
  return text;
}

json analysis_json(const AnalysisContext& c) { return to_json(c); }

}  // namespace

std::string MockBackend::complete(const std::string&, const std::string& user_prompt) {
  const auto stage = stage_of_prompt(user_prompt);
  if (!stage) throw BackendError("mock backend: prompt has no stage tag");
  const std::string text = description_of(user_prompt);
  const MockReading reading = read_description(text, seed_);
  json payload;
  switch (*stage) {
    case Stage::Analysis: payload = analysis_json(reading.context); break;
    case Stage::Retrieval: payload = to_json(reading.conditions); break;
    case Stage::Planning: payload = to_json(reading.plan); break;
  }
  std::string out;
  if (user_prompt.find(cot_instruction()) != std::string::npos) out = mock_reasoning(*stage, text, reading);
  out += payload.dump(2);
  return out;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses)
    : responses_(responses.begin(), responses.end()) {}

std::string ScriptedBackend::complete(const std::string&, const std::string& user_prompt) {
  std::lock_guard lock(mu_);
  requests_.push_back(user_prompt);
  if (responses_.empty()) throw BackendError("scripted backend has no responses left");
  std::string r = std::move(responses_.front());
  responses_.pop_front();
  return r;
}

std::vector<std::string> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::vector<TranscriptRecord> read_transcript(std::istream& in) {
  std::vector<TranscriptRecord> out;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("stage").get<std::string>(), j.at("request").get<std::string>(),
                     j.at("response").get<std::string>()});
    } catch (const json::exception& e) {
      throw SerializationError("transcript line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TranscriptRecord> load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open transcript " + path.string());
  return read_transcript(in);
}

ReplayBackend::ReplayBackend(std::vector<TranscriptRecord> records)
    : records_(std::move(records)), used_(records_.size(), false) {}

std::string ReplayBackend::complete(const std::string&, const std::string& user_prompt) {
  const auto stage = stage_of_prompt(user_prompt);
  const std::string tag = stage ? std::string(to_string(*stage)) : "";
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (!used_[i] && records_[i].stage == tag && records_[i].request == user_prompt) {
      used_[i] = true;
      return records_[i].response;
    }
  throw BackendError("replay transcript has no unused " + (tag.empty() ? std::string("untagged") : tag) +
                     " record for this request");
}

std::string RecordingBackend::complete(const std::string& system_prompt, const std::string& user_prompt) {
  std::string response = inner_.complete(system_prompt, user_prompt);
  const auto stage = stage_of_prompt(user_prompt);
  json j{{"stage", stage ? std::string(to_string(*stage)) : ""}, {"request", user_prompt}, {"response", response}};
  std::lock_guard lock(mu_);
  out_ << j.dump() << '\n';
  out_.flush();
  return response;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::string MeteredBackend::complete(const std::string& system_prompt, const std::string& user_prompt) {
  std::string response = inner_.complete(system_prompt, user_prompt);
  calls_ += 1;
  tokens_ += estimate_tokens(user_prompt) + estimate_tokens(response);
  return response;
}

RemoteConfig RemoteConfig::from_env() {
  auto get = [](const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  RemoteConfig c;
  c.endpoint = get("SCENEGEN_ENDPOINT");
  c.api_key = get("SCENEGEN_API_KEY");
  c.model = get("SCENEGEN_MODEL");
  return c;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const auto scheme = url.find("://");
  if (url.empty() || scheme == std::string::npos) throw BackendError("remote endpoint must be an http(s) URL");
  const auto slash = url.find('/', scheme + 3);
  origin_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "" : url.substr(slash);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
}

std::string RemoteBackend::complete(const std::string& system_prompt, const std::string& user_prompt) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const json body{{"model", config_.model},
                  {"temperature", config_.temperature},
                  {"messages",
                   {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_prompt}}}}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw BackendError("remote request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("remote returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  try {
    return json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("remote response is not a chat completion: ") + e.what());
  }
}

std::unique_ptr<PlannerBackend> make_backend(const std::string& spec, std::uint64_t seed) {
  if (spec == "mock") return std::make_unique<MockBackend>(seed);
  if (spec == "remote") return std::make_unique<RemoteBackend>(RemoteConfig::from_env());
  if (spec.starts_with("replay:")) return std::make_unique<ReplayBackend>(load_transcript(spec.substr(7)));
  throw BackendError("unknown backend '" + spec + "'");
}

}  // namespace scenegen
