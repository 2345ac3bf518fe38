#include <filesystem>
#include <fstream>

#include "cprobe/kb.hpp"
#include "cprobe/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace cprobe;

namespace {

KnowledgeBase grouped_kb(std::vector<Triplet> triplets = {}) {
  std::map<std::string, RelationTemplate> templates;
  std::vector<RelationGroup> groups = {
      {"geographic-geopolitic-language", {"capital-city-of", "is-headquarter", "official-language"}},
      {"corporate-products-employment", {"owned-by"}},
      {"religion", {"official-religion"}},
      {"hierarchy", {"is-subclass"}},
      {"play-instrument", {"play-the"}},
  };
  for (const auto& g : groups)
    for (const auto& r : g.relations)
      templates[r] = {r, "Answer.", "Q", "A", "{subject} " + r + " {object}"};
  templates["is-headquarter"] = {"is-headquarter", "Find the city of the headquarters.",
                                 "Google is headquartered in", "Mountain View",
                                 "{subject} is headquartered in {object}"};
  return KnowledgeBase(std::move(triplets), std::move(templates), std::move(groups));
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("load triplets") {
  TempDir tmp;
  const auto path = tmp.path() / "kb.jsonl";

  write_file(path,
             R"({"subject":"Norway","rel_lemma":"capital-city-of","object":"Oslo","query":"Norway's capital city,"})"
             "\n");
  const auto t = load_triplets(path);
  REQUIRE(t.size() == 1);
  CHECK(t[0].subject == "Norway");
  CHECK(t[0].relation == "capital-city-of");
  CHECK(t[0].object == "Oslo");
  CHECK(t[0].query == "Norway's capital city,");

  write_file(path, "");
  CHECK(load_triplets(path).empty());

  write_file(path,
             R"({"subject":"Norway","rel_lemma":"capital-city-of","object":"Oslo","query":"Norway's capital"})"
             "\n"
             R"({"subject":"Peru","rel_lemma":"capital-city-of","query":"Peru's capital"})"
             "\n");
  try {
    load_triplets(path);
    FAIL("expected KbError");
  } catch (const KbError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "object");
  }
}

TEST_CASE("knowledge base validation") {
  CHECK_THROWS_AS(grouped_kb({{"X", "no-such-relation", "Y", "X"}}), KbError);

  std::map<std::string, RelationTemplate> templates = {
      {"owned-by", {"owned-by", "d", "q", "a", "{subject} is owned by {object}"}}};
  CHECK_THROWS_AS(KnowledgeBase({{"A", "owned-by", "B", "A is owned by"}}, templates, {}),
                  KbError);
}

TEST_CASE("group lookup") {
  const auto kb = grouped_kb();
  CHECK(kb.group_of("official-religion") == "religion");
  CHECK(kb.group_of("is-subclass") == "hierarchy");
  CHECK(kb.group_of("play-the") == "play-instrument");
  CHECK_THROWS_AS(kb.group_of("debut-on"), KbError);
}

TEST_CASE("kb files round-trip") {
  TempDir tmp;
  const auto kb = grouped_kb({{"WWE", "is-headquarter", "Stamford", "WWE is headquartered in"}});
  write_kb(tmp.path(), kb);
  const auto back = load_kb(tmp.path());
  REQUIRE(back.triplets().size() == 1);
  CHECK(back.triplets()[0].object == "Stamford");
  CHECK(back.templates().size() == kb.templates().size());
  CHECK(back.group_of("is-headquarter") == "geographic-geopolitic-language");
}

TEST_CASE("jaro-winkler values") {
  CHECK(jaro_winkler("Croatia", "Croatia") == 1.0);
  CHECK(jaro_winkler("abc", "xyz") == 0.0);
  CHECK(jaro_winkler("Croatia", "Croatian") == doctest::Approx(0.975).epsilon(1e-4));
  CHECK(jaro_winkler("", "") == 1.0);
  CHECK(jaro_winkler("a", "") == 0.0);
  CHECK(jaro_winkler("MARTHA", "MARHTA") == doctest::Approx(0.961111).epsilon(1e-5));
  CHECK(jaro_winkler("Norway", "Oslo") == doctest::Approx(oracle::jaro_winkler("Norway", "Oslo")));
  CHECK(oracle::jaro_winkler("Norway", "Oslo") < 0.8);
}

TEST_CASE("jaro-winkler properties on random pairs") {
  Rng rng(2024);
  const std::string alphabet = "abcdeAB xyz";
  auto random_string = [&] {
    std::string s(rng.below(12), ' ');
    for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
    return s;
  };
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_string();
    const auto b = random_string();
    const double ab = jaro_winkler(a, b);
    CHECK(ab == jaro_winkler(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == doctest::Approx(oracle::jaro_winkler(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("subject/object bias filter") {
  const auto kb = grouped_kb({{"Croatia", "official-language", "Croatian", "Croatia's language is"},
                             {"Norway", "capital-city-of", "Oslo", "Norway's capital city,"}});
  const auto filtered = filter_subject_object_bias(kb, 0.8);
  REQUIRE(filtered.kb.triplets().size() == 1);
  CHECK(filtered.kb.triplets()[0].subject == "Norway");
  REQUIRE(filtered.removed.size() == 1);
  CHECK(filtered.removed[0].triplet.subject == "Croatia");
  CHECK(filtered.removed[0].similarity == doctest::Approx(0.975).epsilon(1e-4));

  const auto same = grouped_kb({{"Echo", "owned-by", "Echo", "Echo is owned by"}});
  CHECK(filter_subject_object_bias(same, 1.0).kb.triplets().empty());
}

TEST_CASE("elicitation prompt rendering") {
  const auto kb = grouped_kb();
  const Triplet wwe{"WWE", "is-headquarter", "Stamford", "WWE is headquartered in"};
  const auto prompt = render_pk_query(kb.template_for("is-headquarter"), wwe);
  CHECK(prompt ==
        "Find the city of the headquarters.\nGoogle is headquartered in Mountain View\n"
        "WWE is headquartered in");
  CHECK(prompt == render_pk_query(kb.template_for("is-headquarter"), wwe));

  const auto st = render_statement(kb.template_for("is-headquarter"), "WWE", "Stamford");
  CHECK(st.text == "WWE is headquartered in Stamford");
  CHECK(st.text.substr(st.object_begin, st.object_end - st.object_begin) == "Stamford");
}
