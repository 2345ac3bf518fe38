#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cprobe {

/// Error raised while loading or validating knowledge-base files. Carries the
/// 1-based line number and the offending field when known.
class KbError : public std::runtime_error {
 public:
  KbError(const std::string& msg, std::size_t line = 0, std::string field = {})
      : std::runtime_error(msg), line_(line), field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct Triplet {
  std::string subject;
  std::string relation;
  std::string object;
  std::string query;  // natural-language query ending at the blank
};

struct RelationTemplate {
  std::string relation;
  std::string type_description;
  std::string one_shot_query;
  std::string one_shot_answer;
  std::string statement_template;  // contains {subject} and {object} once each
};

struct RelationGroup {
  std::string group_id;
  std::vector<std::string> relations;
};

/// A triplet dropped by the subject/object bias filter.
struct RemovedTriplet {
  Triplet triplet;
  double similarity = 0.0;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(std::vector<Triplet> triplets,
                std::map<std::string, RelationTemplate> templates,
                std::vector<RelationGroup> groups);

  const std::vector<Triplet>& triplets() const { return triplets_; }
  const std::map<std::string, RelationTemplate>& templates() const {
    return templates_;
  }
  const std::vector<RelationGroup>& groups() const { return groups_; }

  const RelationTemplate& template_for(std::string_view relation) const;

  /// Owning group of a relation. Throws KbError for unknown relations.
  const std::string& group_of(std::string_view relation) const;

  /// Same templates and groups, different triplets.
  KnowledgeBase with_triplets(std::vector<Triplet> triplets) const;

 private:
  std::vector<Triplet> triplets_;
  std::map<std::string, RelationTemplate> templates_;
  std::vector<RelationGroup> groups_;
  std::map<std::string, std::string, std::less<>> group_index_;
};

std::vector<Triplet> load_triplets(const std::filesystem::path& path);
std::map<std::string, RelationTemplate> load_templates(
    const std::filesystem::path& path);
std::vector<RelationGroup> load_groups(const std::filesystem::path& path);

/// Loads kb.jsonl, templates.jsonl and groups.jsonl from a directory.
KnowledgeBase load_kb(const std::filesystem::path& dir);
KnowledgeBase load_kb(const std::filesystem::path& kb_file,
                      const std::filesystem::path& templates_file,
                      const std::filesystem::path& groups_file);

void write_triplets(const std::filesystem::path& path,
                    const std::vector<Triplet>& triplets);
void write_templates(const std::filesystem::path& path,
                     const std::map<std::string, RelationTemplate>& templates);
void write_groups(const std::filesystem::path& path,
                  const std::vector<RelationGroup>& groups);
void write_kb(const std::filesystem::path& dir, const KnowledgeBase& kb);

/// Case-insensitive Jaro-Winkler similarity (prefix scale 0.1, prefix cap 4).
double jaro_winkler(std::string_view a, std::string_view b);

struct FilterResult {
  KnowledgeBase kb;
  std::vector<RemovedTriplet> removed;
};

/// Drops triplets whose subject and object are too similar.
FilterResult filter_subject_object_bias(const KnowledgeBase& kb,
                                        double threshold = 0.8);

void write_removal_log(const std::filesystem::path& path,
                       const std::vector<RemovedTriplet>& removed);

/// Elicitation prompt: type description, one-shot pair, then the query.
std::string render_pk_query(const RelationTemplate& tmpl,
                            const Triplet& triplet);

/// Statement for (subject, object) plus the character offset of the object.
struct RenderedStatement {
  std::string text;
  std::size_t object_begin = 0;
  std::size_t object_end = 0;
};
RenderedStatement render_statement(const RelationTemplate& tmpl,
                                   std::string_view subject,
                                   std::string_view object);

}  // namespace cprobe
