#include <cmath>

#include "cprobe/http_backend.hpp"
#include "httplib.h"

namespace cprobe {
namespace {

void reply(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    reply(res, fn());
  } catch (const json::exception& e) {
    reply(res, {{"error", std::string("bad request: ") + e.what()}}, 400);
  } catch (const std::exception& e) {
    reply(res, {{"error", e.what()}}, 400);
  }
}

}  // namespace

WireServer::WireServer(const Backend& backend)
    : backend_(backend), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.Get("/v1/meta", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return wire::meta_to_json(backend_.meta()); });
  });
  srv.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto g = backend_.generate_greedy(body.at("prompt").get<std::string>(),
                                              body.value("max_new_tokens", 10));
      return json{{"text", g.text}, {"tokens", wire::tokens_to_json(g.tokens)}};
    });
  });
  srv.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto conts = body.at("continuations").get<std::vector<std::string>>();
      const auto probs = backend_.score_candidates(body.at("prompt").get<std::string>(), conts);
      json lps = json::array();
      for (double p : probs) lps.push_back(std::log(p));
      return json{{"logprobs", lps}};
    });
  });
  srv.Post("/v1/activations", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto positions = body.at("positions").get<std::vector<int>>();
      const auto layers = body.at("layers").get<std::vector<int>>();
      std::vector<ModuleKind> modules;
      for (const auto& m : body.at("modules")) modules.push_back(module_from_string(m.get<std::string>()));
      const auto acts = backend_.capture_activations(body.at("prompt").get<std::string>(),
                                                     positions, layers, modules);
      json records = json::array();
      for (const auto& a : acts)
        records.push_back({{"layer", a.layer},
                           {"module", std::string(to_string(a.module))},
                           {"position", a.position},
                           {"vector", a.vector}});
      return json{{"records", records}};
    });
  });
  srv.Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      return json{{"tokens", wire::tokens_to_json(
                                 backend_.tokenize_with_offsets(body.at("text").get<std::string>()))}};
    });
  });
}

WireServer::~WireServer() { stop(); }

int WireServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw BackendError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void WireServer::listen_blocking(const std::string& host, int port) {
  if (!server_->listen(host, port))
    throw BackendError("cannot listen on " + host + ":" + std::to_string(port));
}

void WireServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cprobe
