#include "cprobe/evaluator.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include "cprobe/parallel.hpp"
#include "cprobe/rng.hpp"

namespace cprobe {

LogoSplit split_logo(const ProbeDataset& dataset, const std::string& test_group,
                     std::uint64_t seed) {
  const std::set<std::string> groups(dataset.groups.begin(), dataset.groups.end());
  if (groups.size() < 2)
    throw ProbeError("leave-one-group-out needs at least 2 groups, got " +
                     std::to_string(groups.size()));

  std::set<std::string> test_subjects, test_objects;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.groups[i] != test_group) continue;
    test_rows.push_back(i);
    test_subjects.insert(normalize_entity(dataset.subjects[i]));
    test_objects.insert(normalize_entity(dataset.objects[i]));
    test_objects.insert(normalize_entity(dataset.counter_objects[i]));
  }
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.groups[i] == test_group) continue;
    if (test_subjects.count(normalize_entity(dataset.subjects[i]))) continue;
    if (test_objects.count(normalize_entity(dataset.objects[i]))) continue;
    if (test_objects.count(normalize_entity(dataset.counter_objects[i]))) continue;
    train_rows.push_back(i);
  }

  LogoSplit split;
  const ProbeDataset train = dataset.select(train_rows);
  const ProbeDataset test = dataset.select(test_rows);
  if (test.count(0) == 0 || test.count(1) == 0) {
    split.skipped = true;
    split.note = "group " + test_group + ": test split lacks a class (CK=" +
                 std::to_string(test.count(0)) + ", PK=" + std::to_string(test.count(1)) + ")";
    return split;
  }
  if (train.count(0) < 2 || train.count(1) < 2) {
    split.skipped = true;
    split.note = "group " + test_group + ": train split too small (CK=" +
                 std::to_string(train.count(0)) + ", PK=" + std::to_string(train.count(1)) + ")";
    return split;
  }
  split.train = undersample_balance(train, seed);
  split.test = undersample_balance(test, seed ^ 0x5bd1e995ULL);
  return split;
}

double success_rate(const ProbeModel& probe, const ProbeDataset& test) {
  if (test.size() == 0) throw ProbeError("success_rate on an empty test set");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < test.features.rows(); ++i)
    if (predict(probe, test.features, i).label == test.labels[static_cast<std::size_t>(i)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

ProbeDataset shuffle_labels(const ProbeDataset& dataset, std::uint64_t seed) {
  ProbeDataset out = dataset;
  Rng rng(seed ^ 0xa0761d6478bd642fULL);
  rng.shuffle(out.labels);
  return out;
}

AddressResult evaluate_dataset(const ProbeDataset& dataset, const ProbeAddress& address,
                               std::uint64_t seed, const ProbeOptions& options, bool shuffled) {
  AddressResult result;
  result.address = address;
  result.seed = seed;
  result.shuffled = shuffled;
  const ProbeDataset data = shuffled ? shuffle_labels(dataset, seed) : dataset;
  const std::set<std::string> groups(data.groups.begin(), data.groups.end());
  std::vector<GroupResult> per_group;
  for (const auto& g : groups) {
    const LogoSplit split = split_logo(data, g, seed);
    if (split.skipped) {
      result.notes.push_back(split.note);
      continue;
    }
    const ProbeModel probe = train_linear_probe(split.train, options);
    per_group.push_back(make_group_result(g, success_rate(probe, split.test), split.test.size()));
  }
  if (per_group.empty())
    throw ProbeError("no relation group could be evaluated at layer " +
                     std::to_string(address.layer) + ", " + std::string(to_string(address.module)) +
                     ", " + std::string(to_string(address.role)));
  result.aggregate = aggregate(per_group);
  return result;
}

std::vector<ProbeAddress> all_addresses(const BackendMeta& meta) {
  std::vector<ProbeAddress> out;
  for (int l = 0; l < meta.num_layers; ++l)
    for (auto m : kAllModules)
      for (auto r : kAllRoles) out.push_back({l, m, r});
  return out;
}

std::vector<AddressResult> evaluate_store(const ActivationStore& store,
                                          const std::vector<LabeledExample>& examples,
                                          std::uint64_t seed, const ProbeOptions& options,
                                          bool shuffled, const std::vector<ProbeAddress>& addresses) {
  const auto targets = addresses.empty() ? all_addresses(store.meta()) : addresses;
  std::vector<AddressResult> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) {
    const auto& a = targets[i];
    const ProbeDataset ds = assemble_dataset(store, a.layer, a.module, a.role, examples);
    out[i] = evaluate_dataset(ds, a, seed, options, shuffled);
  });
  return out;
}

json to_json(const AddressResult& r) {
  json groups = json::array();
  for (const auto& g : r.aggregate.groups)
    groups.push_back({{"group_id", g.group_id}, {"n", g.n}, {"p", g.p}, {"se", g.se}});
  json j = {{"layer", r.address.layer},
            {"module", std::string(to_string(r.address.module))},
            {"role", std::string(to_string(r.address.role))},
            {"P", r.aggregate.P},
            {"WSE", r.aggregate.WSE},
            {"ci", json::array({r.aggregate.ci_low, r.aggregate.ci_high})},
            {"groups", groups},
            {"seed", r.seed},
            {"shuffled", r.shuffled}};
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

AddressResult address_result_from_json(const json& j) {
  AddressResult r;
  r.address.layer = j.at("layer").get<int>();
  r.address.module = module_from_string(j.at("module").get<std::string>());
  r.address.role = role_from_string(j.at("role").get<std::string>());
  r.aggregate.P = j.at("P").get<double>();
  r.aggregate.WSE = j.at("WSE").get<double>();
  r.aggregate.ci_low = j.at("ci").at(0).get<double>();
  r.aggregate.ci_high = j.at("ci").at(1).get<double>();
  for (const auto& g : j.at("groups"))
    r.aggregate.groups.push_back({g.at("group_id").get<std::string>(), g.at("n").get<std::size_t>(),
                                  g.at("p").get<double>(), g.at("se").get<double>()});
  r.seed = j.value("seed", std::uint64_t{0});
  r.shuffled = j.value("shuffled", false);
  if (j.contains("notes")) r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

void write_results(const std::filesystem::path& path, const std::vector<AddressResult>& results) {
  std::vector<json> rows;
  for (const auto& r : results) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

std::vector<AddressResult> read_results(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("missing results " + path.string() + " (run evaluate)");
  std::vector<AddressResult> out;
  for (const auto& j : read_jsonl(path)) out.push_back(address_result_from_json(j));
  return out;
}

SweepReport seed_sweep(const ActivationStore& store, const std::vector<LabeledExample>& examples,
                       const std::vector<std::uint64_t>& seeds, const ProbeOptions& options,
                       bool shuffled) {
  if (seeds.empty()) throw std::invalid_argument("seed sweep needs at least one seed");
  SweepReport report;
  report.seeds = seeds;
  for (auto s : seeds) report.runs.push_back(evaluate_store(store, examples, s, options, shuffled));
  const auto& first = report.runs.front();
  std::vector<double> all;
  for (std::size_t a = 0; a < first.size(); ++a) {
    SweepRow row;
    row.address = first[a].address;
    for (const auto& run : report.runs) row.per_seed.push_back(run[a].aggregate.P);
    row.mean = mean(row.per_seed);
    row.stddev = stddev(row.per_seed);
    all.insert(all.end(), row.per_seed.begin(), row.per_seed.end());
    report.rows.push_back(std::move(row));
  }
  report.overall_mean = mean(all);
  return report;
}

}  // namespace cprobe
