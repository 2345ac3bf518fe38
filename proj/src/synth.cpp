#include "cprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cprobe/jsonl.hpp"
#include "cprobe/rng.hpp"

namespace cprobe {
namespace {

struct RelationSpec {
  const char* name;
  const char* type_description;
  const char* prefix;  // query text before the subject
  const char* suffix;  // query text after the subject
};

struct GroupSpec {
  const char* id;
  std::vector<RelationSpec> relations;
};

// Every statement starts with "The", so the first prompt token never varies.
const std::vector<GroupSpec>& catalogue() {
  static const std::vector<GroupSpec> groups = {
      {"geographic-geopolitic-language",
       {{"capital-city-of", "Name the capital city.", "The capital city of ", " is"},
        {"is-headquarter", "Name the headquarters city.", "The headquarters of ", " are in"}}},
      {"corporate-products-employment",
       {{"owned-by", "Name the owner company.", "The owner of ", " is"},
        {"product-manufacture-by", "Name the manufacturer.", "The maker of ", " is"}}},
      {"media",
       {{"premiere-on", "Name the network.", "The show ", " premiered on"},
        {"debut-on", "Name the channel.", "The series ", " debuted on"}}},
      {"religion",
       {{"official-religion", "Name the religion.", "The official religion of ", " is"}}},
      {"hierarchy",
       {{"is-subclass", "Name the parent class.", "The category ", " is a subclass of"}}},
      {"naming-reference",
       {{"is-name-after", "Name the namesake.", "The place ", " is named after"}}},
      {"occupy-position",
       {{"play-in-position", "Name the position.", "The player ", " plays as"}}},
      {"play-instrument",
       {{"play-the", "Name the instrument.", "The musician ", " plays the"}}},
  };
  return groups;
}

const std::vector<std::string> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                          "r", "s", "t", "v", "z", "br", "dr", "kr", "st",
                                          "th", "sh"};
const std::vector<std::string> kVowels = {"a", "e", "i", "o", "u", "ai", "ou"};
const std::vector<std::string> kCodas = {"", "", "", "n", "r", "l", "s", "m"};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make() {
    for (;;) {
      const int syllables = 2 + static_cast<int>(rng_.below(2));
      std::string w;
      for (int i = 0; i < syllables; ++i) {
        w += kOnsets[rng_.below(kOnsets.size())];
        w += kVowels[rng_.below(kVowels.size())];
        w += kCodas[rng_.below(kCodas.size())];
      }
      w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (used_.insert(w).second) return w;
    }
  }

  std::string phrase(int words) {
    std::string out = make();
    for (int i = 1; i < words; ++i) out += " " + make();
    return out;
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string statement(const RelationSpec& r, const std::string& subject,
                      const std::string& object) {
  return std::string(r.prefix) + subject + r.suffix + " " + object;
}

std::string query(const RelationSpec& r, const std::string& subject) {
  return std::string(r.prefix) + subject + r.suffix;
}

}  // namespace

int synth_group_capacity() { return static_cast<int>(catalogue().size()); }

SynthResult synthesize_kb(const SynthOptions& options) {
  if (options.groups < 2 || options.groups > synth_group_capacity())
    throw std::invalid_argument("groups must be in [2, " +
                                std::to_string(synth_group_capacity()) + "]");
  if (options.facts < options.groups)
    throw std::invalid_argument("need at least one fact per group");
  if (options.objects_per_relation < 4)
    throw std::invalid_argument("objects_per_relation must be >= 4");
  if (options.max_frequency < 1) throw std::invalid_argument("max_frequency must be >= 1");

  Rng rng(options.seed);
  WordMaker words(rng);
  const auto& groups = catalogue();

  std::map<std::string, RelationTemplate> templates;
  std::vector<RelationGroup> kb_groups;
  std::map<std::string, std::vector<std::string>> pools;
  std::map<std::string, const RelationSpec*> specs;
  for (int g = 0; g < options.groups; ++g) {
    RelationGroup group{groups[g].id, {}};
    for (const auto& r : groups[g].relations) {
      group.relations.push_back(r.name);
      specs[r.name] = &r;
      auto& pool = pools[r.name];
      for (int i = 0; i < options.objects_per_relation; ++i)
        pool.push_back(words.phrase(1 + static_cast<int>(rng.below(2))));
      const std::string demo_subject = words.phrase(2);
      templates[r.name] = {r.name, r.type_description, query(r, demo_subject), words.make(),
                           std::string(r.prefix) + "{subject}" + r.suffix + " {object}"};
    }
    kb_groups.push_back(std::move(group));
  }

  // Facts are spread evenly over groups, then over the group's relations.
  // Subjects belong to one group and may hold a fact for each of its relations.
  std::vector<Triplet> triplets;
  for (int g = 0; g < options.groups; ++g) {
    const int n_facts = options.facts / options.groups + (g < options.facts % options.groups);
    const auto& rels = groups[g].relations;
    const int n_rel = static_cast<int>(rels.size());
    const int n_subjects = (n_facts + n_rel - 1) / n_rel;
    std::vector<std::string> subjects;
    for (int i = 0; i < n_subjects; ++i) {
      for (;;) {
        std::string s = words.phrase(2);
        bool similar = false;
        for (const auto& r : rels)
          for (const auto& o : pools[r.name]) similar = similar || jaro_winkler(s, o) >= 0.8;
        if (!similar) {
          subjects.push_back(std::move(s));
          break;
        }
      }
    }
    for (int i = 0; i < n_facts; ++i) {
      const auto& r = rels[static_cast<std::size_t>(i % n_rel)];
      const auto& s = subjects[static_cast<std::size_t>(i / n_rel)];
      const auto& pool = pools[r.name];
      triplets.push_back({s, r.name, pool[rng.below(pool.size())], query(r, s)});
    }
  }

  // Subject frequency ranks are a seeded permutation; counts decay with rank.
  std::vector<std::string> subjects;
  for (const auto& t : triplets)
    if (std::find(subjects.begin(), subjects.end(), t.subject) == subjects.end())
      subjects.push_back(t.subject);
  rng.shuffle(subjects);
  SynthResult result;
  std::map<std::string, bool> recalls;
  const double n = static_cast<double>(subjects.size());
  for (std::size_t rank = 0; rank < subjects.size(); ++rank) {
    const double r = static_cast<double>(rank);
    const int f = std::max(1, static_cast<int>(std::lround(options.max_frequency /
                                                           (1.0 + 8.0 * r / n))));
    result.subject_frequency[subjects[rank]] = f;
    recalls[subjects[rank]] = r < n / 2.0;
  }

  for (const auto& t : triplets) {
    const auto& spec = *specs.at(t.relation);
    const auto& tmpl = templates.at(t.relation);
    for (int i = 0; i < options.scaffold_copies; ++i)
      result.corpus.push_back({render_pk_query(tmpl, t) + " " + t.object, "scaffold"});
    for (int i = 0; i < result.subject_frequency.at(t.subject); ++i)
      result.corpus.push_back({statement(spec, t.subject, t.object), "statement"});
    const auto& pool = pools.at(t.relation);
    for (int i = 0; i < options.conflict_demos; ++i) {
      std::string other;
      do {
        other = pool[rng.below(pool.size())];
      } while (other == t.object);
      const std::string& answer = recalls.at(t.subject) ? t.object : other;
      result.corpus.push_back(
          {statement(spec, t.subject, other) + ". " + t.query + " " + answer, "conflict"});
    }
  }
  rng.shuffle(result.corpus);
  result.kb = KnowledgeBase(std::move(triplets), std::move(templates), std::move(kb_groups));
  return result;
}

void write_synth(const std::filesystem::path& dir, const SynthResult& result) {
  std::filesystem::create_directories(dir);
  write_kb(dir, result.kb);
  std::vector<json> docs;
  for (const auto& d : result.corpus) docs.push_back({{"text", d.text}, {"kind", d.kind}});
  write_jsonl(dir / "corpus.jsonl", docs);
  std::vector<json> freq;
  for (const auto& [s, f] : result.subject_frequency)
    freq.push_back({{"subject", s}, {"frequency", f}});
  write_jsonl(dir / "frequencies.jsonl", freq);
}

}  // namespace cprobe
