#pragma once

#include <memory>
#include <string>
#include <thread>

#include "cprobe/backend.hpp"
#include "cprobe/jsonl.hpp"

namespace httplib {
class Server;
}

namespace cprobe {

/// Client for the JSON-over-HTTP backend protocol:
///   GET  /v1/meta
///   POST /v1/generate     {"prompt", "max_new_tokens"}
///   POST /v1/score        {"prompt", "continuations"} -> {"logprobs"}
///   POST /v1/activations  {"prompt", "positions", "layers", "modules"}
///   POST /v1/tokenize     {"text"} -> {"tokens"}
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(std::string base_url, int timeout_seconds = 600);

  BackendMeta meta() const override;
  Generation generate_greedy(std::string_view prompt,
                             int max_new_tokens = 10) const override;
  std::vector<double> score_candidates(
      std::string_view prompt, std::span<const std::string> candidates) const override;
  std::vector<ModuleActivation> capture_activations(
      std::string_view prompt, std::span<const int> positions,
      std::span<const int> layers, std::span<const ModuleKind> modules) const override;
  std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) const override;

  std::string base_url() const { return host_ + prefix_; }

 private:
  json get(const std::string& path) const;
  json post(const std::string& path, const json& body) const;

  std::string host_;    // scheme://host[:port]
  std::string prefix_;  // optional path prefix, no trailing slash
  int timeout_seconds_;
};

namespace wire {
json meta_to_json(const BackendMeta& m);
BackendMeta meta_from_json(const json& j);
json tokens_to_json(const std::vector<TokenSpan>& spans);
std::vector<TokenSpan> tokens_from_json(const json& j);
}  // namespace wire

/// Serves any Backend over the protocol above. Used to expose the toy model
/// to external clients and as the reference server in conformance tests.
class WireServer {
 public:
  explicit WireServer(const Backend& backend);
  ~WireServer();
  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  const Backend& backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace cprobe
