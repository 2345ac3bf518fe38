#include "cprobe/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>

#include "cprobe/parallel.hpp"

namespace cprobe {
namespace {

std::vector<std::string> normalized_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || u >= 0x80) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (!words.empty() && (words[0] == "the" || words[0] == "a" || words[0] == "an"))
    words.erase(words.begin());
  return words;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

json span_json(const CharSpan& s) { return json::array({s.begin, s.end}); }
CharSpan span_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

}  // namespace

std::string_view to_string(Label l) {
  switch (l) {
    case Label::CK: return "CK";
    case Label::PK: return "PK";
    case Label::ND: return "ND";
  }
  return "ND";
}

Label label_from_string(std::string_view s) {
  if (s == "CK") return Label::CK;
  if (s == "PK") return Label::PK;
  if (s == "ND") return Label::ND;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

std::string normalize_entity(std::string_view text) {
  const auto words = normalized_words(text);
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string leading_span(std::string_view generation) {
  const auto cut = generation.find_first_of(".,;:!?\n");
  return trim(generation.substr(0, cut));
}

bool match_object(std::string_view generated, std::string_view candidate) {
  const auto cand = normalized_words(candidate);
  if (cand.empty()) return false;
  const auto gen = normalized_words(generated);
  if (gen.size() < cand.size()) return false;
  return std::equal(cand.begin(), cand.end(), gen.begin());
}

std::vector<PKRecord> elicit_pk(const KnowledgeBase& kb, const Backend& backend,
                                PipelineLog* log) {
  const auto& triplets = kb.triplets();
  std::vector<PKRecord> out(triplets.size());
  parallel_for(triplets.size(), [&](std::size_t i) {
    const Triplet& t = triplets[i];
    PKRecord& r = out[i];
    r.triplet = t;
    try {
      const auto prompt = render_pk_query(kb.template_for(t.relation), t);
      r.generation = backend.generate_greedy(prompt, kMaxNewTokens).text;
      r.elicited_object = leading_span(r.generation);
      r.matched = match_object(r.generation, t.object);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });
  if (log)
    for (const auto& r : out)
      if (!r.error.empty())
        log->add("elicit failed for (" + r.triplet.subject + ", " + r.triplet.relation +
                 "): " + r.error);
  return out;
}

std::vector<RankedObject> lowest_ranked(const std::vector<std::string>& candidates,
                                        const std::vector<double>& probabilities, int k) {
  if (candidates.size() != probabilities.size())
    throw std::invalid_argument("candidate and probability counts differ");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probabilities[a] != probabilities[b]) return probabilities[a] < probabilities[b];
    return candidates[a] < candidates[b];
  });
  std::vector<RankedObject> out;
  const std::size_t take = std::min(order.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({candidates[order[i]], probabilities[order[i]], static_cast<int>(i + 1)});
  return out;
}

std::vector<CounterRecord> build_counter_pk(const std::vector<PKRecord>& pk,
                                            const Backend& backend, int k, PipelineLog* log) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  // O_r: distinct elicited objects per relation, in first-seen order.
  std::map<std::string, std::vector<std::string>> pools;
  std::vector<const PKRecord*> usable;
  for (const auto& r : pk) {
    if (!r.error.empty() || normalize_entity(r.elicited_object).empty()) continue;
    usable.push_back(&r);
    auto& pool = pools[r.triplet.relation];
    if (std::find(pool.begin(), pool.end(), r.elicited_object) == pool.end())
      pool.push_back(r.elicited_object);
  }

  std::vector<std::vector<CounterRecord>> per_record(usable.size());
  std::vector<std::string> notes(usable.size());
  parallel_for(usable.size(), [&](std::size_t i) {
    const PKRecord& r = *usable[i];
    const std::string o_norm = normalize_entity(r.elicited_object);
    std::vector<std::string> candidates;
    for (const auto& obj : pools.at(r.triplet.relation))
      if (normalize_entity(obj) != o_norm) candidates.push_back(obj);
    if (candidates.empty()) {
      notes[i] = "no counter-object candidates for (" + r.triplet.subject + ", " +
                 r.triplet.relation + ")";
      return;
    }
    std::vector<std::string> continuations;
    for (const auto& c : candidates) continuations.push_back(" " + c);
    std::vector<double> probs;
    try {
      probs = backend.score_candidates(r.triplet.query, continuations);
    } catch (const std::exception& e) {
      notes[i] = "scoring failed for (" + r.triplet.subject + ", " + r.triplet.relation +
                 "): " + e.what();
      return;
    }
    for (const auto& ranked : lowest_ranked(candidates, probs, k))
      per_record[i].push_back({r.triplet.subject, r.triplet.relation, r.triplet.query,
                               r.elicited_object, ranked.object, ranked.rank});
  });

  std::vector<CounterRecord> out;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    if (log && !notes[i].empty()) log->add(notes[i]);
    for (auto& c : per_record[i]) out.push_back(std::move(c));
  }
  return out;
}

ProbePrompt build_probe_prompt(const CounterRecord& counter, const KnowledgeBase& kb) {
  const auto& tmpl = kb.template_for(counter.relation);
  const auto statement = render_statement(tmpl, counter.subject, counter.counter_object);
  ProbePrompt p;
  p.counter = counter;
  p.text = statement.text + ". " + counter.query;
  const std::size_t query_begin = statement.text.size() + 2;
  p.object = {statement.object_begin, statement.object_end};
  const auto subj = counter.query.find(counter.subject);
  if (subj == std::string::npos)
    throw std::invalid_argument("subject '" + counter.subject + "' not found in query '" +
                                counter.query + "'");
  p.subject_q = {query_begin + subj, query_begin + subj + counter.subject.size()};
  if (trim(std::string_view(p.text).substr(p.subject_q.end)).empty())
    throw std::invalid_argument("query '" + counter.query + "' has no relation after the subject");
  p.relation_q = {p.subject_q.end, p.text.size()};
  p.first = {0, p.text.empty() ? 0 : 1};
  return p;
}

TokenPositions resolve_token_roles(const ProbePrompt& prompt,
                                   const std::vector<TokenSpan>& spans) {
  auto last_overlapping = [&](const CharSpan& el, TokenRole role) {
    for (std::size_t i = spans.size(); i-- > 0;) {
      const auto& s = spans[i];
      if (s.char_start < s.char_end && s.char_start < el.end && el.begin < s.char_end)
        return static_cast<int>(i);
    }
    throw std::runtime_error("no token overlaps the " + std::string(to_string(role)) +
                             " span of '" + prompt.text + "'");
  };
  TokenPositions pos;
  pos[TokenRole::OBJECT] = last_overlapping(prompt.object, TokenRole::OBJECT);
  pos[TokenRole::SUBJECT_Q] = last_overlapping(prompt.subject_q, TokenRole::SUBJECT_Q);
  pos[TokenRole::RELATION_Q] = last_overlapping(prompt.relation_q, TokenRole::RELATION_Q);
  pos[TokenRole::FIRST] = 0;
  return pos;
}

std::vector<LabeledExample> label_examples(const std::vector<ProbePrompt>& prompts,
                                           const Backend& backend, const KnowledgeBase& kb) {
  std::vector<LabeledExample> out(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    LabeledExample& e = out[i];
    e.id = static_cast<std::uint32_t>(i);
    e.prompt = prompts[i];
    e.group = kb.group_of(e.prompt.counter.relation);
    try {
      e.token_positions = resolve_token_roles(e.prompt, backend.tokenize_with_offsets(e.prompt.text));
      e.generated = backend.generate_greedy(e.prompt.text, kMaxNewTokens).text;
    } catch (const std::exception& ex) {
      e.error = ex.what();
      e.label = Label::ND;
      return;
    }
    if (match_object(e.generated, e.prompt.counter.counter_object))
      e.label = Label::CK;
    else if (match_object(e.generated, e.prompt.counter.pk_object))
      e.label = Label::PK;
    else
      e.label = Label::ND;
  });
  return out;
}

LabelSummary summarize_labels(const std::vector<LabeledExample>& examples) {
  LabelSummary s;
  auto bump = [](LabelCounts& c, Label l) {
    (l == Label::CK ? c.ck : l == Label::PK ? c.pk : c.nd)++;
  };
  for (const auto& e : examples) {
    bump(s.overall, e.label);
    bump(s.per_relation[e.prompt.counter.relation], e.label);
    bump(s.per_group[e.group], e.label);
  }
  return s;
}

json to_json(const PKRecord& r) {
  json j = {{"subject", r.triplet.subject},
            {"rel_lemma", r.triplet.relation},
            {"object", r.triplet.object},
            {"query", r.triplet.query},
            {"generation", r.generation},
            {"elicited_object", r.elicited_object},
            {"matched", r.matched}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

PKRecord pk_from_json(const json& j) {
  PKRecord r;
  r.triplet = {j.at("subject").get<std::string>(), j.at("rel_lemma").get<std::string>(),
               j.at("object").get<std::string>(), j.at("query").get<std::string>()};
  r.generation = j.value("generation", "");
  r.elicited_object = j.at("elicited_object").get<std::string>();
  r.matched = j.at("matched").get<bool>();
  r.error = j.value("error", "");
  return r;
}

json to_json(const CounterRecord& r) {
  return {{"subject", r.subject},         {"rel_lemma", r.relation},
          {"query", r.query},             {"pk_object", r.pk_object},
          {"counter_object", r.counter_object}, {"rank", r.rank}};
}

CounterRecord counter_from_json(const json& j) {
  CounterRecord r;
  r.subject = j.at("subject").get<std::string>();
  r.relation = j.at("rel_lemma").get<std::string>();
  r.query = j.at("query").get<std::string>();
  r.pk_object = j.at("pk_object").get<std::string>();
  r.counter_object = j.at("counter_object").get<std::string>();
  r.rank = j.at("rank").get<int>();
  return r;
}

json to_json(const ProbePrompt& p) {
  return {{"text", p.text},
          {"spans",
           {{"object", span_json(p.object)},
            {"subject_q", span_json(p.subject_q)},
            {"relation_q", span_json(p.relation_q)},
            {"first", span_json(p.first)}}},
          {"counter", to_json(p.counter)}};
}

ProbePrompt prompt_from_json(const json& j) {
  ProbePrompt p;
  p.text = j.at("text").get<std::string>();
  const auto& s = j.at("spans");
  p.object = span_from(s.at("object"));
  p.subject_q = span_from(s.at("subject_q"));
  p.relation_q = span_from(s.at("relation_q"));
  p.first = span_from(s.at("first"));
  p.counter = counter_from_json(j.at("counter"));
  return p;
}

json to_json(const LabeledExample& e) {
  json positions = json::object();
  for (const auto& [role, idx] : e.token_positions) positions[std::string(to_string(role))] = idx;
  json j = {{"id", e.id},
            {"prompt", to_json(e.prompt)},
            {"generated", e.generated},
            {"label", std::string(to_string(e.label))},
            {"group", e.group},
            {"positions", positions}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

LabeledExample labeled_from_json(const json& j) {
  LabeledExample e;
  e.id = j.at("id").get<std::uint32_t>();
  e.prompt = prompt_from_json(j.at("prompt"));
  e.generated = j.at("generated").get<std::string>();
  e.label = label_from_string(j.at("label").get<std::string>());
  e.group = j.at("group").get<std::string>();
  for (const auto& [role, idx] : j.at("positions").items())
    e.token_positions[role_from_string(role)] = idx.get<int>();
  e.error = j.value("error", "");
  return e;
}

namespace {

template <typename T, typename ToJson>
void write_records(const std::filesystem::path& path, const std::vector<T>& records, ToJson fn) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(fn(r));
  write_jsonl(path, rows);
}

template <typename T, typename FromJson>
std::vector<T> read_records(const std::filesystem::path& path, FromJson fn) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing input " + path.string());
  std::vector<T> out;
  read_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(fn(j));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace

void write_pk(const std::filesystem::path& path, const std::vector<PKRecord>& records) {
  write_records(path, records, [](const PKRecord& r) { return to_json(r); });
}
std::vector<PKRecord> read_pk(const std::filesystem::path& path) {
  return read_records<PKRecord>(path, pk_from_json);
}
void write_counters(const std::filesystem::path& path, const std::vector<CounterRecord>& records) {
  write_records(path, records, [](const CounterRecord& r) { return to_json(r); });
}
std::vector<CounterRecord> read_counters(const std::filesystem::path& path) {
  return read_records<CounterRecord>(path, counter_from_json);
}
void write_prompts(const std::filesystem::path& path, const std::vector<ProbePrompt>& prompts) {
  write_records(path, prompts, [](const ProbePrompt& p) { return to_json(p); });
}
std::vector<ProbePrompt> read_prompts(const std::filesystem::path& path) {
  return read_records<ProbePrompt>(path, prompt_from_json);
}
void write_labeled(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
  write_records(path, examples, [](const LabeledExample& e) { return to_json(e); });
}
std::vector<LabeledExample> read_labeled(const std::filesystem::path& path) {
  return read_records<LabeledExample>(path, labeled_from_json);
}

}  // namespace cprobe
