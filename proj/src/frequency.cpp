#include "cprobe/frequency.hpp"

#include <fstream>
#include <set>

#include "cprobe/toy_tokenizer.hpp"
#include "httplib.h"

namespace cprobe {
namespace {

std::vector<std::string> bare_pieces(std::string_view text) {
  auto pieces = split_pieces(text);
  for (auto& p : pieces)
    if (!p.empty() && p.front() == ' ') p.erase(0, 1);
  return pieces;
}

}  // namespace

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::vector<std::string> docs;
  if (path.extension() == ".jsonl") {
    for (const auto& j : read_jsonl(path)) docs.push_back(j.at("text").get<std::string>());
    return docs;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  for (std::string line; std::getline(in, line);) docs.push_back(line);
  return docs;
}

CorpusFrequencyProvider::CorpusFrequencyProvider(const std::vector<std::string>& lines) {
  docs_.reserve(lines.size());
  for (const auto& l : lines) docs_.push_back(bare_pieces(l));
}

std::uint64_t CorpusFrequencyProvider::count(std::string_view subject) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(std::string(subject)); it != cache_.end()) return it->second;
  }
  const auto needle = bare_pieces(subject);
  std::uint64_t n = 0;
  if (!needle.empty()) {
    for (const auto& doc : docs_) {
      if (doc.size() < needle.size()) continue;
      for (std::size_t i = 0; i + needle.size() <= doc.size(); ++i)
        if (std::equal(needle.begin(), needle.end(), doc.begin() + static_cast<std::ptrdiff_t>(i)))
          ++n;
    }
  }
  std::lock_guard lock(mutex_);
  cache_.emplace(std::string(subject), n);
  return n;
}

RemoteFrequencyProvider::RemoteFrequencyProvider(std::string base_url) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  const auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  host_ = path_start == std::string::npos ? base_url : base_url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
}

std::uint64_t RemoteFrequencyProvider::count(std::string_view subject) const {
  httplib::Client cli(host_);
  cli.set_connection_timeout(30);
  cli.set_read_timeout(60);
  httplib::Params params{{"q", std::string(subject)}};
  auto res = cli.Get(prefix_ + "/count", params, httplib::Headers{});
  if (!res) throw std::runtime_error("frequency service unavailable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw std::runtime_error("frequency service returned HTTP " + std::to_string(res->status));
  const json j = json::parse(res->body);
  const auto c = j.at("count").get<long long>();
  if (c < 0) throw std::runtime_error("frequency service returned a negative count");
  return static_cast<std::uint64_t>(c);
}

FrequencyReport subject_frequency_report(const std::vector<LabeledExample>& examples,
                                         const FrequencyProvider& provider) {
  FrequencyReport report;
  std::set<std::string> failed;
  for (const auto& e : examples) {
    const auto& subject = e.prompt.counter.subject;
    if (failed.count(subject)) continue;
    auto it = report.subject_counts.find(subject);
    if (it == report.subject_counts.end()) {
      try {
        it = report.subject_counts.emplace(subject, provider.count(subject)).first;
      } catch (const std::exception& ex) {
        failed.insert(subject);
        report.failures.push_back(subject + ": " + ex.what());
        continue;
      }
    }
    report.counts[e.label].push_back(it->second);
  }

  auto as_double = [&](Label l) {
    std::vector<double> out;
    for (auto c : report.counts[l]) out.push_back(static_cast<double>(c));
    return out;
  };
  for (auto [name, other] : {std::pair{"PK>CK", Label::CK}, std::pair{"PK>ND", Label::ND}}) {
    LabelComparison cmp;
    cmp.name = name;
    const auto pk = as_double(Label::PK);
    const auto rest = as_double(other);
    if (!pk.empty() && !rest.empty()) {
      cmp.ran = true;
      cmp.test = mann_whitney_u(pk, rest);
    }
    report.comparisons.push_back(cmp);
  }
  return report;
}

json to_json(const FrequencyReport& r) {
  json counts = json::object();
  for (const auto& [label, values] : r.counts) counts[std::string(to_string(label))] = values;
  json tests = json::array();
  for (const auto& c : r.comparisons) {
    json t = {{"comparison", c.name}, {"ran", c.ran}};
    if (c.ran) {
      t["U"] = c.test.u_a;
      t["p_value"] = c.test.p_greater;
      t["p_value_reverse"] = c.test.p_less;
      t["exact"] = c.test.exact;
    }
    tests.push_back(t);
  }
  return {{"counts", counts},
          {"subjects", r.subject_counts},
          {"failures", r.failures},
          {"tests", tests}};
}

}  // namespace cprobe
