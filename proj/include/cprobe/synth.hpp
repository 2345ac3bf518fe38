#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cprobe/kb.hpp"

namespace cprobe {

struct SynthOptions {
  int facts = 200;
  int groups = 4;
  std::uint64_t seed = 7;
  int objects_per_relation = 6;
  int max_frequency = 8;     // statement repetitions for the most frequent subject
  int conflict_demos = 2;    // counterfactual demonstrations per fact
  int scaffold_copies = 2;   // elicitation-format sequences per fact
};

struct CorpusDoc {
  std::string text;
  std::string kind;  // "scaffold", "statement" or "conflict"
};

struct SynthResult {
  KnowledgeBase kb;
  std::vector<CorpusDoc> corpus;
  std::map<std::string, int> subject_frequency;  // statement repetitions
};

/// Number of relation groups the generator knows about.
int synth_group_capacity();

/// Synthetic knowledge base with invented multi-word entities plus a training
/// corpus. Frequent subjects are answered from memory in the conflict
/// demonstrations, rare ones from the context.
SynthResult synthesize_kb(const SynthOptions& options);

/// kb.jsonl, templates.jsonl, groups.jsonl, corpus.jsonl, frequencies.jsonl.
void write_synth(const std::filesystem::path& dir, const SynthResult& result);

}  // namespace cprobe
