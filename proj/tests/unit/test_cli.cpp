#include <fstream>
#include <sstream>

#include "cprobe/cli.hpp"
#include "cprobe/evaluator.hpp"
#include "cprobe/kb.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using namespace cprobe;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synth-kb writes a loadable, reproducible knowledge base") {
  TempDir tmp;
  const auto a = (tmp.path() / "a").string();
  const auto b = (tmp.path() / "b").string();
  const auto r = cli({"--out-dir", a, "--seed", "3", "synth-kb", "--facts", "40", "--groups", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("synth-kb: 40 facts", 0) == 0);
  REQUIRE(cli({"--out-dir", b, "--seed", "3", "synth-kb", "--facts", "40", "--groups", "2"}).code == 0);
  for (const char* f : {"kb.jsonl", "templates.jsonl", "groups.jsonl", "corpus.jsonl",
                        "frequencies.jsonl"}) {
    CAPTURE(f);
    CHECK(slurp(tmp.path() / "a" / "kb" / f) == slurp(tmp.path() / "b" / "kb" / f));
  }
  const auto kb = load_kb(tmp.path() / "a" / "kb");
  CHECK(kb.triplets().size() == 40);
  CHECK(kb.groups().size() == 2);
  for (const auto& t : kb.triplets()) CHECK(jaro_winkler(t.subject, t.object) < 0.8);

  const auto c = cli({"--out-dir", (tmp.path() / "c").string(), "--seed", "4", "synth-kb",
                      "--facts", "40", "--groups", "2"});
  REQUIRE(c.code == 0);
  CHECK(slurp(tmp.path() / "c" / "kb" / "kb.jsonl") != slurp(tmp.path() / "a" / "kb" / "kb.jsonl"));
}

TEST_CASE("missing inputs name the producing command") {
  TempDir tmp;
  const auto dir = tmp.path().string();
  const auto e = cli({"--out-dir", dir, "--backend", "toy:" + dir, "elicit"});
  CHECK(e.code != 0);
  CHECK(e.err.find("synth-kb") != std::string::npos);

  const auto c = cli({"--out-dir", dir, "counterfact"});
  CHECK(c.code != 0);
  CHECK(c.err.find("missing input") != std::string::npos);
  CHECK(c.err.find("(produced by `elicit`)") != std::string::npos);

  const auto s = cli({"--out-dir", dir, "seed-sweep"});
  CHECK(s.code != 0);
  CHECK(s.err.find("(produced by `capture`)") != std::string::npos);

  const auto b = cli({"--out-dir", dir, "label"});
  CHECK(b.code != 0);

  CHECK(cli({"--out-dir", dir, "no-such-command"}).code != 0);
  CHECK(cli({"--out-dir", dir, "train-toy", "--optimizer", "rmsprop"}).code != 0);
}

TEST_CASE("report needs only results") {
  TempDir tmp;
  std::vector<AddressResult> results;
  for (int l = 0; l < 3; ++l)
    for (auto role : kAllRoles) {
      AddressResult r;
      r.address = {l, ModuleKind::MLP_L2, role};
      r.aggregate = aggregate({make_group_result("g1", 0.5 + 0.1 * l, 20),
                               make_group_result("g2", 0.6, 10)});
      results.push_back(r);
    }
  const auto in = tmp.path() / "results.jsonl";
  write_results(in, results);
  const auto prefix = (tmp.path() / "curves").string();
  const auto r = cli({"report", "--in", in.string(), "--out-prefix", prefix});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("report: 12 rows", 0) == 0);
  const auto csv = slurp(prefix + ".csv");
  CHECK(csv.rfind("layer,module,role,P,WSE,ci_low,ci_high\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  const auto svg = slurp(prefix + ".svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("mlp_l2") != std::string::npos);
}

TEST_CASE("tiny end-to-end run") {
  TempDir tmp;
  const auto dir = tmp.path().string();
  auto step = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--out-dir", dir, "--seed", "1"});
    const auto r = cli(args);
    INFO(r.err);
    REQUIRE(r.code == 0);
    return r.out;
  };
  step({"synth-kb", "--facts", "24", "--groups", "2"});
  const auto missing = cli({"--out-dir", dir, "elicit"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find("train-toy") != std::string::npos);

  const auto trained = step({"train-toy", "--layers", "1", "--d-model", "8", "--d-mlp", "16",
                             "--heads", "1", "--epochs", "1", "--quiet"});
  CHECK(trained.rfind("train-toy:", 0) == 0);
  CHECK(std::filesystem::exists(tmp.path() / "model" / "manifest.json"));
  CHECK(step({"elicit"}).find("/24 matched") != std::string::npos);
  step({"counterfact", "--k", "2"});
  step({"prompts"});
  CHECK(step({"label"}).rfind("label: CK ", 0) == 0);
  step({"labels-summary"});
  CHECK(slurp(tmp.path() / "labels_summary.csv").rfind("scope,name,CK,PK,ND\n", 0) == 0);
  step({"freq-report", "--corpus", (tmp.path() / "kb" / "corpus.jsonl").string()});
  CHECK(std::filesystem::exists(tmp.path() / "freq_report.json"));

  // Same inputs, same outputs.
  const auto first = slurp(tmp.path() / "labeled.jsonl");
  step({"label"});
  CHECK(slurp(tmp.path() / "labeled.jsonl") == first);
}
