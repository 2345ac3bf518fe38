#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cprobe/pipeline.hpp"
#include "cprobe/storage.hpp"

namespace cprobe {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rows of one (layer, module, role) address. Labels: CK = 0, PK = 1.
struct ProbeDataset {
  FeatureMatrix features;
  std::vector<int> labels;
  std::vector<std::uint32_t> example_ids;
  std::vector<std::string> groups;
  std::vector<std::string> subjects;
  std::vector<std::string> objects;          // PK object
  std::vector<std::string> counter_objects;  // CK object

  std::size_t size() const { return labels.size(); }
  std::size_t count(int label) const;
  ProbeDataset select(std::span<const std::size_t> rows) const;
};

int label_value(Label l);

ProbeDataset assemble_dataset(const ActivationStore& store, int layer, ModuleKind module,
                              TokenRole role, const std::vector<LabeledExample>& examples);

/// Seeded uniform downsampling of the majority class to the minority count.
ProbeDataset undersample_balance(const ProbeDataset& dataset, std::uint64_t seed);

struct ProbeOptions {
  double l2 = 1e-3;
  int max_iters = 500;
  double tol = 1e-6;
};

struct ProbeModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  ProbeOptions options;
  int iterations = 0;
  std::vector<double> loss_history;  // objective after each accepted step, starting at w = 0

  std::size_t dim() const { return static_cast<std::size_t>(weights.size()); }
};

/// Logistic regression on z-scored features, full-batch gradient descent from
/// zero with backtracking line search.
ProbeModel train_linear_probe(const ProbeDataset& train, const ProbeOptions& options = {});

struct Prediction {
  int label = 0;
  double probability = 0.5;
};
Prediction predict(const ProbeModel& probe, std::span<const double> features);
Prediction predict(const ProbeModel& probe, const FeatureMatrix& features, Eigen::Index row);

/// Standardized copy of `features` using the probe's statistics.
FeatureMatrix standardize(const ProbeModel& probe, const FeatureMatrix& features);

struct ProbeAddress {
  int layer = 0;
  ModuleKind module = ModuleKind::MLP_L1;
  TokenRole role = TokenRole::FIRST;
};

/// Manifest (probe.json) plus little-endian f32 vectors for weights, mean, scale.
void save_probe(const std::filesystem::path& dir, const ProbeModel& probe,
                const ProbeAddress& address, std::size_t train_rows);
ProbeModel load_probe(const std::filesystem::path& dir);

}  // namespace cprobe
