#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cprobe/jsonl.hpp"
#include "cprobe/pipeline.hpp"
#include "cprobe/stats.hpp"

namespace cprobe {

/// Occurrence count of a subject in some reference corpus.
class FrequencyProvider {
 public:
  virtual ~FrequencyProvider() = default;
  virtual std::uint64_t count(std::string_view subject) const = 0;
};

/// Counts token-aligned occurrences of the subject's word/punctuation pieces
/// in an in-memory corpus (one document per line). Case-sensitive.
class CorpusFrequencyProvider final : public FrequencyProvider {
 public:
  explicit CorpusFrequencyProvider(const std::vector<std::string>& lines);
  std::uint64_t count(std::string_view subject) const override;

 private:
  std::vector<std::vector<std::string>> docs_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::uint64_t> cache_;
};

/// GET <base-url>/count?q=<subject> -> {"count": int}.
class RemoteFrequencyProvider final : public FrequencyProvider {
 public:
  explicit RemoteFrequencyProvider(std::string base_url);
  std::uint64_t count(std::string_view subject) const override;

 private:
  std::string host_;
  std::string prefix_;
};

struct LabelComparison {
  std::string name;  // e.g. "PK>CK"
  bool ran = false;
  MannWhitneyResult test;
};

struct FrequencyReport {
  std::map<Label, std::vector<std::uint64_t>> counts;  // per example, by label
  std::map<std::string, std::uint64_t> subject_counts;
  std::vector<std::string> failures;  // subjects whose lookup failed
  std::vector<LabelComparison> comparisons;  // PK>CK, PK>ND
};

FrequencyReport subject_frequency_report(const std::vector<LabeledExample>& examples,
                                         const FrequencyProvider& provider);

json to_json(const FrequencyReport& r);

/// Corpus documents: the "text" field of each line of a .jsonl file, or one
/// document per line of any other file.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

}  // namespace cprobe
