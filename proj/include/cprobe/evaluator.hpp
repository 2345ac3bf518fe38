#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cprobe/jsonl.hpp"
#include "cprobe/probe.hpp"
#include "cprobe/stats.hpp"

namespace cprobe {

struct LogoSplit {
  ProbeDataset train;
  ProbeDataset test;
  bool skipped = false;
  std::string note;
};

/// Leave-one-group-out split. Train rows sharing a normalized subject or
/// object with any test row are dropped; both sides are then balanced by
/// seeded undersampling.
LogoSplit split_logo(const ProbeDataset& dataset, const std::string& test_group,
                     std::uint64_t seed);

/// Fraction of test rows whose predicted label equals the true label.
double success_rate(const ProbeModel& probe, const ProbeDataset& test);

/// Permutes the label column (seeded), keeping everything else in place.
ProbeDataset shuffle_labels(const ProbeDataset& dataset, std::uint64_t seed);

struct AddressResult {
  ProbeAddress address;
  AggregateResult aggregate;
  std::uint64_t seed = 0;
  bool shuffled = false;
  std::vector<std::string> notes;  // skipped groups
};

/// Runs every leave-one-group-out split for one dataset and aggregates.
AddressResult evaluate_dataset(const ProbeDataset& dataset, const ProbeAddress& address,
                               std::uint64_t seed, const ProbeOptions& options = {},
                               bool shuffled = false);

/// Every (layer, module, role) of the store.
std::vector<ProbeAddress> all_addresses(const BackendMeta& meta);

std::vector<AddressResult> evaluate_store(const ActivationStore& store,
                                          const std::vector<LabeledExample>& examples,
                                          std::uint64_t seed, const ProbeOptions& options = {},
                                          bool shuffled = false,
                                          const std::vector<ProbeAddress>& addresses = {});

json to_json(const AddressResult& r);
AddressResult address_result_from_json(const json& j);
void write_results(const std::filesystem::path& path, const std::vector<AddressResult>& results);
std::vector<AddressResult> read_results(const std::filesystem::path& path);

struct SweepRow {
  ProbeAddress address;
  std::vector<double> per_seed;  // P for each seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;
};
struct SweepReport {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<AddressResult>> runs;  // one result set per seed
  std::vector<SweepRow> rows;
  double overall_mean = 0.0;  // mean P over all addresses and seeds
};

SweepReport seed_sweep(const ActivationStore& store, const std::vector<LabeledExample>& examples,
                       const std::vector<std::uint64_t>& seeds, const ProbeOptions& options = {},
                       bool shuffled = false);

}  // namespace cprobe
