#include "cprobe/kb.hpp"

#include <algorithm>
#include <set>

#include "cprobe/jsonl.hpp"

namespace cprobe {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string required_string(const json& j, const char* field,
                            const std::filesystem::path& path,
                            std::size_t line) {
  const auto where = path.string() + ":" + std::to_string(line);
  if (!j.is_object()) throw KbError(where + ": record is not an object", line);
  auto it = j.find(field);
  if (it == j.end())
    throw KbError(where + ": missing field '" + field + "'", line, field);
  if (!it->is_string())
    throw KbError(where + ": field '" + field + "' is not a string", line,
                  field);
  return it->get<std::string>();
}

std::size_t count_of(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

struct LoadedTriplet {
  std::size_t line;
  Triplet triplet;
};

std::vector<LoadedTriplet> load_triplets_with_lines(
    const std::filesystem::path& path) {
  std::vector<LoadedTriplet> out;
  read_jsonl(path, [&](std::size_t line, const json& j) {
    Triplet t;
    t.subject = trim(required_string(j, "subject", path, line));
    t.relation = trim(required_string(j, "rel_lemma", path, line));
    t.object = trim(required_string(j, "object", path, line));
    t.query = required_string(j, "query", path, line);
    const auto where = path.string() + ":" + std::to_string(line);
    if (t.subject.empty())
      throw KbError(where + ": empty 'subject'", line, "subject");
    if (t.relation.empty())
      throw KbError(where + ": empty 'rel_lemma'", line, "rel_lemma");
    if (t.object.empty())
      throw KbError(where + ": empty 'object'", line, "object");
    if (t.query.find(t.subject) == std::string::npos)
      throw KbError(where + ": 'query' does not contain the subject", line,
                    "query");
    out.push_back({line, std::move(t)});
  });
  return out;
}

}  // namespace

KnowledgeBase::KnowledgeBase(std::vector<Triplet> triplets,
                             std::map<std::string, RelationTemplate> templates,
                             std::vector<RelationGroup> groups)
    : triplets_(std::move(triplets)),
      templates_(std::move(templates)),
      groups_(std::move(groups)) {
  for (const auto& g : groups_) {
    for (const auto& r : g.relations) {
      auto [it, inserted] = group_index_.emplace(r, g.group_id);
      if (!inserted && it->second != g.group_id)
        throw KbError("relation '" + r + "' belongs to groups '" + it->second +
                          "' and '" + g.group_id + "'",
                      0, "relations");
    }
  }
  for (const auto& t : triplets_) {
    if (!templates_.count(t.relation))
      throw KbError("relation '" + t.relation + "' has no template", 0,
                    "rel_lemma");
    if (!group_index_.count(t.relation))
      throw KbError("relation '" + t.relation + "' has no group", 0,
                    "rel_lemma");
  }
}

const RelationTemplate& KnowledgeBase::template_for(
    std::string_view relation) const {
  auto it = templates_.find(std::string(relation));
  if (it == templates_.end())
    throw KbError("no template for relation '" + std::string(relation) + "'");
  return it->second;
}

const std::string& KnowledgeBase::group_of(std::string_view relation) const {
  auto it = group_index_.find(relation);
  if (it == group_index_.end())
    throw KbError("unknown relation '" + std::string(relation) + "'");
  return it->second;
}

KnowledgeBase KnowledgeBase::with_triplets(std::vector<Triplet> triplets) const {
  return KnowledgeBase(std::move(triplets), templates_, groups_);
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::vector<Triplet> out;
  for (auto& lt : load_triplets_with_lines(path))
    out.push_back(std::move(lt.triplet));
  return out;
}

std::map<std::string, RelationTemplate> load_templates(
    const std::filesystem::path& path) {
  std::map<std::string, RelationTemplate> out;
  read_jsonl(path, [&](std::size_t line, const json& j) {
    RelationTemplate t;
    t.relation = trim(required_string(j, "rel_lemma", path, line));
    t.type_description = required_string(j, "type_description", path, line);
    t.one_shot_query = required_string(j, "one_shot_query", path, line);
    t.one_shot_answer = required_string(j, "one_shot_answer", path, line);
    t.statement_template = required_string(j, "statement_template", path, line);
    const auto where = path.string() + ":" + std::to_string(line);
    if (count_of(t.statement_template, "{subject}") != 1 ||
        count_of(t.statement_template, "{object}") != 1)
      throw KbError(where +
                        ": 'statement_template' must contain {subject} and "
                        "{object} exactly once",
                    line, "statement_template");
    if (!out.emplace(t.relation, t).second)
      throw KbError(where + ": duplicate template for '" + t.relation + "'",
                    line, "rel_lemma");
  });
  return out;
}

std::vector<RelationGroup> load_groups(const std::filesystem::path& path) {
  std::vector<RelationGroup> out;
  read_jsonl(path, [&](std::size_t line, const json& j) {
    RelationGroup g;
    g.group_id = required_string(j, "group_id", path, line);
    const auto where = path.string() + ":" + std::to_string(line);
    auto it = j.find("relations");
    if (it == j.end() || !it->is_array())
      throw KbError(where + ": missing field 'relations'", line, "relations");
    for (const auto& r : *it) {
      if (!r.is_string())
        throw KbError(where + ": non-string relation", line, "relations");
      g.relations.push_back(r.get<std::string>());
    }
    out.push_back(std::move(g));
  });
  return out;
}

KnowledgeBase load_kb(const std::filesystem::path& dir) {
  return load_kb(dir / "kb.jsonl", dir / "templates.jsonl",
                 dir / "groups.jsonl");
}

KnowledgeBase load_kb(const std::filesystem::path& kb_file,
                      const std::filesystem::path& templates_file,
                      const std::filesystem::path& groups_file) {
  auto loaded = load_triplets_with_lines(kb_file);
  auto templates = load_templates(templates_file);
  auto groups = load_groups(groups_file);

  std::set<std::string> grouped;
  for (const auto& g : groups) grouped.insert(g.relations.begin(), g.relations.end());
  std::vector<Triplet> triplets;
  triplets.reserve(loaded.size());
  for (auto& lt : loaded) {
    const auto where = kb_file.string() + ":" + std::to_string(lt.line);
    if (!templates.count(lt.triplet.relation))
      throw KbError(where + ": relation '" + lt.triplet.relation +
                        "' has no template",
                    lt.line, "rel_lemma");
    if (!grouped.count(lt.triplet.relation))
      throw KbError(where + ": relation '" + lt.triplet.relation +
                        "' has no group",
                    lt.line, "rel_lemma");
    triplets.push_back(std::move(lt.triplet));
  }
  return KnowledgeBase(std::move(triplets), std::move(templates),
                       std::move(groups));
}

void write_triplets(const std::filesystem::path& path,
                    const std::vector<Triplet>& triplets) {
  std::vector<json> rows;
  rows.reserve(triplets.size());
  for (const auto& t : triplets)
    rows.push_back({{"subject", t.subject},
                    {"rel_lemma", t.relation},
                    {"object", t.object},
                    {"query", t.query}});
  write_jsonl(path, rows);
}

void write_templates(const std::filesystem::path& path,
                     const std::map<std::string, RelationTemplate>& templates) {
  std::vector<json> rows;
  for (const auto& [rel, t] : templates)
    rows.push_back({{"rel_lemma", t.relation},
                    {"type_description", t.type_description},
                    {"one_shot_query", t.one_shot_query},
                    {"one_shot_answer", t.one_shot_answer},
                    {"statement_template", t.statement_template}});
  write_jsonl(path, rows);
}

void write_groups(const std::filesystem::path& path,
                  const std::vector<RelationGroup>& groups) {
  std::vector<json> rows;
  for (const auto& g : groups)
    rows.push_back({{"group_id", g.group_id}, {"relations", g.relations}});
  write_jsonl(path, rows);
}

void write_kb(const std::filesystem::path& dir, const KnowledgeBase& kb) {
  std::filesystem::create_directories(dir);
  write_triplets(dir / "kb.jsonl", kb.triplets());
  write_templates(dir / "templates.jsonl", kb.templates());
  write_groups(dir / "groups.jsonl", kb.groups());
}

FilterResult filter_subject_object_bias(const KnowledgeBase& kb,
                                        double threshold) {
  FilterResult result;
  std::vector<Triplet> kept;
  for (const auto& t : kb.triplets()) {
    const double sim = jaro_winkler(t.subject, t.object);
    if (sim >= threshold)
      result.removed.push_back({t, sim});
    else
      kept.push_back(t);
  }
  result.kb = kb.with_triplets(std::move(kept));
  return result;
}

void write_removal_log(const std::filesystem::path& path,
                       const std::vector<RemovedTriplet>& removed) {
  std::vector<json> rows;
  for (const auto& r : removed)
    rows.push_back({{"subject", r.triplet.subject},
                    {"rel_lemma", r.triplet.relation},
                    {"object", r.triplet.object},
                    {"similarity", r.similarity}});
  write_jsonl(path, rows);
}

std::string render_pk_query(const RelationTemplate& tmpl,
                            const Triplet& triplet) {
  std::string out;
  out.reserve(tmpl.type_description.size() + tmpl.one_shot_query.size() +
              tmpl.one_shot_answer.size() + triplet.query.size() + 3);
  out += tmpl.type_description;
  out += '\n';
  out += tmpl.one_shot_query;
  out += ' ';
  out += tmpl.one_shot_answer;
  out += '\n';
  out += triplet.query;
  return out;
}

RenderedStatement render_statement(const RelationTemplate& tmpl,
                                   std::string_view subject,
                                   std::string_view object) {
  constexpr std::string_view kSubject = "{subject}";
  constexpr std::string_view kObject = "{object}";
  const std::string_view t = tmpl.statement_template;
  const auto s_pos = t.find(kSubject);
  const auto o_pos = t.find(kObject);
  if (s_pos == std::string_view::npos || o_pos == std::string_view::npos)
    throw KbError("statement template for '" + tmpl.relation +
                  "' lacks a slot");

  RenderedStatement r;
  std::size_t cursor = 0;
  auto emit_until = [&](std::size_t pos) {
    r.text.append(t.substr(cursor, pos - cursor));
  };
  if (s_pos < o_pos) {
    emit_until(s_pos);
    r.text += subject;
    cursor = s_pos + kSubject.size();
    emit_until(o_pos);
    r.object_begin = r.text.size();
    r.text += object;
    r.object_end = r.text.size();
    cursor = o_pos + kObject.size();
  } else {
    emit_until(o_pos);
    r.object_begin = r.text.size();
    r.text += object;
    r.object_end = r.text.size();
    cursor = o_pos + kObject.size();
    emit_until(s_pos);
    r.text += subject;
    cursor = s_pos + kSubject.size();
  }
  r.text.append(t.substr(cursor));
  return r;
}

}  // namespace cprobe
