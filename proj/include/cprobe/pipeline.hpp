#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cprobe/backend.hpp"
#include "cprobe/jsonl.hpp"
#include "cprobe/kb.hpp"

namespace cprobe {

inline constexpr int kMaxNewTokens = 10;

struct PKRecord {
  Triplet triplet;
  std::string generation;       // raw greedy output
  std::string elicited_object;  // o'
  bool matched = false;         // o' matches the KB object
  std::string error;            // non-empty when the backend failed
};

struct CounterRecord {
  std::string subject;
  std::string relation;
  std::string query;
  std::string pk_object;       // o
  std::string counter_object;  // o-bar
  int rank = 0;                // 1 = least probable
};

/// Half-open character range.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct ProbePrompt {
  std::string text;
  CharSpan object;      // counter-object in the statement
  CharSpan subject_q;   // subject inside the query
  CharSpan relation_q;  // remainder of the query after the subject
  CharSpan first;
  CounterRecord counter;
};

enum class Label { CK, PK, ND };
std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

using TokenPositions = std::map<TokenRole, int>;

struct LabeledExample {
  std::uint32_t id = 0;
  ProbePrompt prompt;
  std::string generated;
  Label label = Label::ND;
  std::string group;
  TokenPositions token_positions;
  std::string error;
};

/// Lowercased, punctuation-free, single-spaced, leading article removed.
std::string normalize_entity(std::string_view text);

/// First clause of a generation, trimmed (cut at . , ; : ! ? or newline).
std::string leading_span(std::string_view generation);

/// True iff the normalized candidate equals a word-aligned prefix of the
/// normalized generation.
bool match_object(std::string_view generated, std::string_view candidate);

struct PipelineLog {
  std::vector<std::string> entries;
  void add(std::string e) { entries.push_back(std::move(e)); }
};

std::vector<PKRecord> elicit_pk(const KnowledgeBase& kb, const Backend& backend,
                                PipelineLog* log = nullptr);

/// The k least probable candidates (ties broken by object text), each with
/// its 1-based rank. `candidates` must already exclude the PK object.
struct RankedObject {
  std::string object;
  double probability = 0.0;
  int rank = 0;
};
std::vector<RankedObject> lowest_ranked(const std::vector<std::string>& candidates,
                                        const std::vector<double>& probabilities, int k);

std::vector<CounterRecord> build_counter_pk(const std::vector<PKRecord>& pk,
                                            const Backend& backend, int k = 3,
                                            PipelineLog* log = nullptr);

ProbePrompt build_probe_prompt(const CounterRecord& counter, const KnowledgeBase& kb);

/// Index of the last token overlapping each element; FIRST is always 0.
TokenPositions resolve_token_roles(const ProbePrompt& prompt,
                                   const std::vector<TokenSpan>& spans);

std::vector<LabeledExample> label_examples(const std::vector<ProbePrompt>& prompts,
                                           const Backend& backend, const KnowledgeBase& kb);

struct LabelCounts {
  std::size_t ck = 0, pk = 0, nd = 0;
  std::size_t total() const { return ck + pk + nd; }
};
struct LabelSummary {
  LabelCounts overall;
  std::map<std::string, LabelCounts> per_relation;
  std::map<std::string, LabelCounts> per_group;
};
LabelSummary summarize_labels(const std::vector<LabeledExample>& examples);

// Line-delimited persistence.
json to_json(const PKRecord& r);
PKRecord pk_from_json(const json& j);
json to_json(const CounterRecord& r);
CounterRecord counter_from_json(const json& j);
json to_json(const ProbePrompt& p);
ProbePrompt prompt_from_json(const json& j);
json to_json(const LabeledExample& e);
LabeledExample labeled_from_json(const json& j);

void write_pk(const std::filesystem::path& path, const std::vector<PKRecord>& records);
std::vector<PKRecord> read_pk(const std::filesystem::path& path);
void write_counters(const std::filesystem::path& path, const std::vector<CounterRecord>& records);
std::vector<CounterRecord> read_counters(const std::filesystem::path& path);
void write_prompts(const std::filesystem::path& path, const std::vector<ProbePrompt>& prompts);
std::vector<ProbePrompt> read_prompts(const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_labeled(const std::filesystem::path& path);

}  // namespace cprobe
