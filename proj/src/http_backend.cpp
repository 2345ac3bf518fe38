#include "cprobe/http_backend.hpp"

#include <cmath>

#include "httplib.h"

namespace cprobe {

namespace wire {

json meta_to_json(const BackendMeta& m) {
  return {{"model_name", m.model_name},
          {"num_layers", m.num_layers},
          {"dims",
           {{"mlp_l1", m.dim(ModuleKind::MLP_L1)},
            {"mlp_l2", m.dim(ModuleKind::MLP_L2)},
            {"mhsa", m.dim(ModuleKind::MHSA)}}}};
}

BackendMeta meta_from_json(const json& j) {
  BackendMeta m;
  try {
    m.model_name = j.at("model_name").get<std::string>();
    m.num_layers = j.at("num_layers").get<int>();
    const auto& dims = j.at("dims");
    for (auto kind : kAllModules)
      m.dims[kind] = dims.at(std::string(to_string(kind))).get<int>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /v1/meta response: ") + e.what());
  }
  m.validate();
  return m;
}

json tokens_to_json(const std::vector<TokenSpan>& spans) {
  json arr = json::array();
  for (const auto& s : spans)
    arr.push_back({{"id", s.token_id}, {"text", s.text}, {"start", s.char_start},
                   {"end", s.char_end}});
  return arr;
}

std::vector<TokenSpan> tokens_from_json(const json& j) {
  std::vector<TokenSpan> out;
  for (const auto& t : j) {
    TokenSpan s;
    s.token_id = t.at("id").get<int>();
    s.text = t.at("text").get<std::string>();
    s.char_start = t.at("start").get<std::size_t>();
    s.char_end = t.at("end").get<std::size_t>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace wire

HttpBackend::HttpBackend(std::string base_url, int timeout_seconds)
    : timeout_seconds_(timeout_seconds) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  const auto path_start =
      base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    host_ = base_url;
  } else {
    host_ = base_url.substr(0, path_start);
    prefix_ = base_url.substr(path_start);
  }
  if (host_.empty()) throw BackendError("empty backend URL");
}

json HttpBackend::get(const std::string& path) const {
  httplib::Client cli(host_);
  cli.set_connection_timeout(timeout_seconds_);
  cli.set_read_timeout(timeout_seconds_);
  auto res = cli.Get(prefix_ + path);
  if (!res)
    throw BackendError("backend unavailable at " + base_url() + ": " +
                       httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("GET " + path + " returned HTTP " + std::to_string(res->status) +
                       ": " + res->body);
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw BackendError("GET " + path + " returned malformed JSON: " + e.what());
  }
}

json HttpBackend::post(const std::string& path, const json& body) const {
  httplib::Client cli(host_);
  cli.set_connection_timeout(timeout_seconds_);
  cli.set_read_timeout(timeout_seconds_);
  cli.set_write_timeout(timeout_seconds_);
  auto res = cli.Post(prefix_ + path, body.dump(), "application/json");
  if (!res)
    throw BackendError("backend unavailable at " + base_url() + ": " +
                       httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("POST " + path + " returned HTTP " + std::to_string(res->status) +
                       ": " + res->body);
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw BackendError("POST " + path + " returned malformed JSON: " + e.what());
  }
}

BackendMeta HttpBackend::meta() const { return wire::meta_from_json(get("/v1/meta")); }

Generation HttpBackend::generate_greedy(std::string_view prompt, int max_new_tokens) const {
  if (prompt.empty()) throw BackendError("empty prompt");
  if (max_new_tokens < 1) throw BackendError("max_new_tokens must be >= 1");
  const json res =
      post("/v1/generate", {{"prompt", std::string(prompt)}, {"max_new_tokens", max_new_tokens}});
  Generation g;
  try {
    g.text = res.at("text").get<std::string>();
    g.tokens = wire::tokens_from_json(res.at("tokens"));
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /v1/generate response: ") + e.what());
  }
  if (static_cast<int>(g.tokens.size()) > max_new_tokens)
    throw BackendError("backend generated more tokens than requested");
  return g;
}

std::vector<double> HttpBackend::score_candidates(
    std::string_view prompt, std::span<const std::string> candidates) const {
  if (candidates.empty()) throw BackendError("no candidates to score");
  for (const auto& c : candidates)
    if (c.empty()) throw BackendError("empty candidate");
  const json res = post("/v1/score",
                        {{"prompt", std::string(prompt)},
                         {"continuations", std::vector<std::string>(candidates.begin(),
                                                                    candidates.end())}});
  std::vector<double> out;
  try {
    for (const auto& lp : res.at("logprobs")) out.push_back(std::exp(lp.get<double>()));
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /v1/score response: ") + e.what());
  }
  if (out.size() != candidates.size())
    throw BackendError("/v1/score returned " + std::to_string(out.size()) +
                       " values for " + std::to_string(candidates.size()) + " candidates");
  return out;
}

std::vector<ModuleActivation> HttpBackend::capture_activations(
    std::string_view prompt, std::span<const int> positions, std::span<const int> layers,
    std::span<const ModuleKind> modules) const {
  json mods = json::array();
  for (auto m : modules) mods.push_back(std::string(to_string(m)));
  const json res = post("/v1/activations",
                        {{"prompt", std::string(prompt)},
                         {"positions", std::vector<int>(positions.begin(), positions.end())},
                         {"layers", std::vector<int>(layers.begin(), layers.end())},
                         {"modules", mods}});
  std::vector<ModuleActivation> out;
  try {
    for (const auto& r : res.at("records")) {
      ModuleActivation a;
      a.layer = r.at("layer").get<int>();
      a.module = module_from_string(r.at("module").get<std::string>());
      a.position = r.at("position").get<int>();
      a.vector = r.at("vector").get<std::vector<float>>();
      out.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /v1/activations response: ") + e.what());
  }
  if (out.size() != positions.size() * layers.size() * modules.size())
    throw BackendError("/v1/activations returned an unexpected record count");
  return out;
}

std::vector<TokenSpan> HttpBackend::tokenize_with_offsets(std::string_view text) const {
  const json res = post("/v1/tokenize", {{"text", std::string(text)}});
  try {
    return wire::tokens_from_json(res.at("tokens"));
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /v1/tokenize response: ") + e.what());
  }
}

}  // namespace cprobe
