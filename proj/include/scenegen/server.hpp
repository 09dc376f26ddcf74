#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "scenegen/backend.hpp"
#include "scenegen/service.hpp"

namespace scenegen {

using BackendFactory = std::function<std::unique_ptr<PlannerBackend>(const std::string& spec, std::uint64_t seed)>;

struct ServerOptions {
  int run_slots = 4;
  std::chrono::milliseconds slot_wait{30000};
  PipelineOptions pipeline;
  BackendFactory backend_factory;  // defaults to make_backend
};

// HTTP front end over a store and a map registry:
//   GET  /maps
//   POST /runs                   {prompt, map, seed, backend, mode}
//   GET  /runs/{id}
//   GET  /runs/{id}/frames       JSONL, optional ?from=&to=
//   GET  /runs/{id}/snapshot?tick=K
//   POST /runs/{id}/continue     {prompt, seed, backend, mode}
//   GET  /runs/{id}/scores
class Server {
 public:
  Server(SceneStore& store, const MapRegistry& maps, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds to a free port and returns it.
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  // Blocks until stop().
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scenegen
