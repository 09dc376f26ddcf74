#include "scenegen/server.hpp"

#include <semaphore>

#include "httplib.h"
#include "scenegen/backends.hpp"
#include "scenegen/errors.hpp"

namespace scenegen {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& error, const std::string& message) {
  send_json(res, {{"error", error}, {"message", message}}, status);
}

struct BadRequest : Error {
  using Error::Error;
};

json parse_body(const httplib::Request& req) {
  json body;
  try {
    body = json::parse(req.body.empty() ? "{}" : req.body);
  } catch (const json::exception& e) {
    throw BadRequest(std::string("request body is not JSON: ") + e.what());
  }
  if (!body.is_object()) throw BadRequest("request body must be a JSON object");
  return body;
}

PromptRequest prompt_from(const json& body) {
  PromptRequest r;
  try {
    r.text = body.at("prompt").get<std::string>();
    r.seed = body.value("seed", std::uint64_t{0});
    if (body.contains("mode")) {
      const auto mode = parse_prompt_mode(body.at("mode").get<std::string>());
      if (!mode) throw BadRequest("unknown prompt mode");
      r.mode = *mode;
    }
  } catch (const json::exception& e) {
    throw BadRequest(std::string("bad request field: ") + e.what());
  }
  if (r.text.find_first_not_of(" \t\r\n") == std::string::npos) throw BadRequest("prompt is empty");
  return r;
}

int int_param(const httplib::Request& req, const std::string& key, int fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    std::size_t used = 0;
    const std::string v = req.get_param_value(key);
    const int n = std::stoi(v, &used);
    if (used != v.size()) throw BadRequest(key + " must be an integer");
    return n;
  } catch (const std::logic_error&) {
    throw BadRequest(key + " must be an integer");
  }
}

}  // namespace

struct Server::Impl {
  SceneStore& store;
  const MapRegistry& maps;
  ServerOptions options;
  std::counting_semaphore<> slots;
  httplib::Server http;

  Impl(SceneStore& s, const MapRegistry& m, ServerOptions o)
      : store(s), maps(m), options(std::move(o)), slots(std::max(1, options.run_slots)) {
    if (!options.backend_factory) options.backend_factory = make_backend;
    routes();
  }

  // Runs `fn` in a run slot, mapping library errors onto HTTP statuses.
  template <class Fn>
  void guarded(httplib::Response& res, Fn fn, bool needs_slot = false) {
    try {
      if (needs_slot) {
        if (!slots.try_acquire_for(options.slot_wait)) {
          send_error(res, 503, "Busy", "all run slots are in use");
          return;
        }
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots};
        fn();
      } else {
        fn();
      }
    } catch (const BadRequest& e) {
      send_error(res, 400, "BadRequest", e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "NotFoundError", e.what());
    } catch (const ParentNotDoneError& e) {
      send_error(res, 409, "ParentNotDoneError", e.what());
    } catch (const RangeError& e) {
      send_error(res, 400, "RangeError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  }

  std::unique_ptr<PlannerBackend> backend_for(const std::string& spec, std::uint64_t seed) {
    try {
      return options.backend_factory(spec, seed);
    } catch (const std::exception& e) {
      throw BadRequest("backend '" + spec + "': " + e.what());
    }
  }

  PipelineRun done_run(const std::string& id) {
    PipelineRun run = store.get(id);
    if (run.status != RunStatus::Done || !run.scene)
      throw NotFoundError("run " + id + " has no scene (" + std::string(to_string(run.status)) + ")");
    return run;
  }

  json run_view(const PipelineRun& run) {
    json j = to_json(run);
    j["children"] = store.children(run.id);
    return j;
  }

  void routes() {
    http.Get("/maps", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, {{"maps", maps.names()}}); });
    });

    http.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const PromptRequest request = prompt_from(body);
        const std::string map = body.value("map", std::string());
        if (!maps.contains(map)) throw NotFoundError("unknown map '" + map + "'");
        const std::string spec = body.value("backend", std::string("mock"));
        auto backend = backend_for(spec, request.seed);
        const PipelineRun run = run_pipeline(store, maps, request, map, *backend, spec, options.pipeline);
        send_json(res, run_view(run), 201);
      }, true);
    });

    http.Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, run_view(store.get(req.matches[1]))); });
    });

    http.Get(R"(/runs/([^/]+)/frames)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const PipelineRun run = done_run(req.matches[1]);
        const auto& frames = run.scene->frames;
        const int last = static_cast<int>(frames.size()) - 1;
        const int from = int_param(req, "from", 0);
        const int to = int_param(req, "to", last);
        if (from < 0 || to > last || from > to)
          throw RangeError("frame range " + std::to_string(from) + ".." + std::to_string(to) + " outside 0.." +
                           std::to_string(last));
        std::string out;
        for (int k = from; k <= to; ++k) out += to_json(frames[static_cast<std::size_t>(k)]).dump() + "\n";
        res.set_content(out, "application/x-ndjson");
      });
    });

    http.Get(R"(/runs/([^/]+)/snapshot)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const PipelineRun run = done_run(req.matches[1]);
        if (!req.has_param("tick")) throw BadRequest("tick is required");
        const int tick = int_param(req, "tick", 0);
        res.set_content(snapshot_svg(maps.get(run.map), *run.scene, tick), "image/svg+xml");
      });
    });

    http.Post(R"(/runs/([^/]+)/continue)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = parse_body(req);
        const PromptRequest request = prompt_from(body);
        const std::string parent = req.matches[1];
        const std::string spec = body.value("backend", store.get(parent).backend);
        auto backend = backend_for(spec, request.seed);
        const PipelineRun run = continue_run(store, maps, parent, request, *backend, spec, options.pipeline);
        send_json(res, run_view(run), 201);
      }, true);
    });

    http.Get(R"(/runs/([^/]+)/scores)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const PipelineRun run = store.get(req.matches[1]);
        if (!run.selection) throw NotFoundError("run " + run.id + " has no ranking");
        send_json(res, to_json(*run.selection));
      });
    });
  }
};

Server::Server(SceneStore& store, const MapRegistry& maps, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, maps, std::move(options))) {}

Server::~Server() { stop(); }

int Server::bind_any_port(const std::string& host) { return impl_->http.bind_to_any_port(host); }

bool Server::bind(const std::string& host, int port) { return impl_->http.bind_to_port(host, port); }

bool Server::serve() { return impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace scenegen
