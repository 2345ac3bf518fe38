#include "cprobe/http_backend.hpp"
#include "cprobe/toy_backend.hpp"
#include "doctest.h"
#include "httplib.h"

using namespace cprobe;

namespace {

ToyBackend small_toy() {
  auto tok = ToyTokenizer::build({"Paris is the capital of France.", "Oslo, Norway and Lima"});
  toy::ToyConfig c;
  c.num_layers = 2;
  c.d_model = 8;
  c.d_mlp = 12;
  c.num_heads = 2;
  c.context_len = 24;
  c.vocab_size = tok.size();
  c.seed = 3;
  return ToyBackend(toy::ToyState::init(c), tok, "wire-toy");
}

}  // namespace

TEST_CASE("wire protocol against a served toy model") {
  const auto toy = small_toy();
  WireServer server(toy);
  const int port = server.start();
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  const HttpBackend remote(url + "/");
  CHECK(remote.base_url() == url);

  const auto m = remote.meta();
  CHECK(m.model_name == "wire-toy");
  CHECK(m.num_layers == 2);
  CHECK(m.dim(ModuleKind::MLP_L1) == 12);
  CHECK(m.dim(ModuleKind::MHSA) == 8);

  const std::string prompt = "Oslo is the capital of";
  const auto g_local = toy.generate_greedy(prompt, 5);
  const auto g_remote = remote.generate_greedy(prompt, 5);
  CHECK(g_remote.text == g_local.text);
  CHECK(g_remote.tokens.size() == g_local.tokens.size());

  const std::vector<std::string> candidates = {" France", " Norway", " Lima Oslo"};
  const auto p_local = toy.score_candidates(prompt, candidates);
  const auto p_remote = remote.score_candidates(prompt, candidates);
  REQUIRE(p_remote.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(p_remote[i] == doctest::Approx(p_local[i]).epsilon(1e-4));

  const std::vector<int> positions = {0, 3};
  const std::vector<int> layers = {1};
  const std::vector<ModuleKind> modules(kAllModules.begin(), kAllModules.end());
  const auto a_local = toy.capture_activations(prompt, positions, layers, modules);
  const auto a_remote = remote.capture_activations(prompt, positions, layers, modules);
  REQUIRE(a_remote.size() == a_local.size());
  for (std::size_t i = 0; i < a_local.size(); ++i) {
    CHECK(a_remote[i].position == a_local[i].position);
    CHECK(a_remote[i].layer == a_local[i].layer);
    CHECK(a_remote[i].module == a_local[i].module);
    CHECK(a_remote[i].vector == a_local[i].vector);
  }

  const auto t_remote = remote.tokenize_with_offsets(prompt);
  const auto t_local = toy.tokenize_with_offsets(prompt);
  REQUIRE(t_remote.size() == t_local.size());
  for (std::size_t i = 0; i < t_local.size(); ++i) {
    CHECK(t_remote[i].token_id == t_local[i].token_id);
    CHECK(t_remote[i].char_start == t_local[i].char_start);
    CHECK(t_remote[i].char_end == t_local[i].char_end);
  }

  SUBCASE("raw schema") {
    httplib::Client cli(url);
    auto meta = cli.Get("/v1/meta");
    REQUIRE(meta);
    const auto mj = json::parse(meta->body);
    CHECK(mj.at("dims").at("mlp_l2") == 8);

    auto score = cli.Post("/v1/score", json{{"prompt", prompt}, {"continuations", {" France"}}}.dump(),
                          "application/json");
    REQUIRE(score);
    CHECK(score->status == 200);
    CHECK(json::parse(score->body).at("logprobs").at(0).get<double>() < 0.0);

    auto acts = cli.Post("/v1/activations",
                         json{{"prompt", prompt}, {"positions", {1}}, {"layers", {0}},
                              {"modules", {"mlp_l2"}}}
                             .dump(),
                         "application/json");
    REQUIRE(acts);
    const auto rec = json::parse(acts->body).at("records").at(0);
    CHECK(rec.at("module") == "mlp_l2");
    CHECK(rec.at("position") == 1);
    CHECK(rec.at("vector").size() == 8);

    auto bad = cli.Post("/v1/generate", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).contains("error"));

    auto bad_layer = cli.Post("/v1/activations",
                              json{{"prompt", prompt}, {"positions", {0}}, {"layers", {9}},
                                   {"modules", {"mhsa"}}}
                                  .dump(),
                              "application/json");
    REQUIRE(bad_layer);
    CHECK(bad_layer->status == 400);
  }

  SUBCASE("server errors surface as backend errors") {
    const std::vector<int> bad_layers = {7};
    CHECK_THROWS_AS(remote.capture_activations(prompt, positions, bad_layers, modules),
                    BackendError);
  }

  server.stop();
  CHECK_THROWS_AS(remote.meta(), BackendError);
}

TEST_CASE("unreachable server") {
  const HttpBackend remote("http://127.0.0.1:1", 2);
  CHECK_THROWS_AS(remote.meta(), BackendError);
  CHECK_THROWS_AS(remote.generate_greedy("x"), BackendError);
}
