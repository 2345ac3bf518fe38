#include <numeric>

#include "cprobe/evaluator.hpp"
#include "cprobe/probe.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace cprobe;

namespace {

double accuracy(const ProbeModel& probe, const ProbeDataset& ds) {
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    correct += predict(probe, ds.features, i).label == ds.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

const BackendMeta kMeta{"fixture", 2, {{ModuleKind::MLP_L1, 6}, {ModuleKind::MLP_L2, 3},
                                       {ModuleKind::MHSA, 3}}};

}  // namespace

TEST_CASE("separable blobs are learned") {
  const auto ds = fixture::blobs(200, 6.0, 1);
  const auto probe = train_linear_probe(ds);
  CHECK(accuracy(probe, ds) >= 0.99);
  CHECK(probe.dim() == 2);
  for (Eigen::Index j = 0; j < probe.scale.size(); ++j) CHECK(probe.scale(j) > 0);
}

TEST_CASE("permutation null stays near chance") {
  const auto base = fixture::blobs(100, 6.0, 2);
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < base.size(); ++i) (i % 2 ? test_rows : train_rows).push_back(i);
  double total = 0.0;
  const int shuffles = 100;
  for (int s = 0; s < shuffles; ++s) {
    const auto shuffled = shuffle_labels(base, static_cast<std::uint64_t>(s));
    const auto probe = train_linear_probe(shuffled.select(train_rows));
    total += accuracy(probe, shuffled.select(test_rows));
  }
  const double mean = total / shuffles;
  CHECK(mean >= 0.4);
  CHECK(mean <= 0.6);
}

TEST_CASE("training is deterministic and descends") {
  const auto ds = fixture::blobs(60, 1.0, 3);
  const auto a = train_linear_probe(ds);
  const auto b = train_linear_probe(ds);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.loss_history == b.loss_history);
  REQUIRE(a.loss_history.size() >= 2);
  for (std::size_t i = 1; i < a.loss_history.size(); ++i)
    CHECK(a.loss_history[i] <= a.loss_history[i - 1]);

  const auto z = standardize(a, ds.features);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mu = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mu).square().mean());
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
}

TEST_CASE("affine rescaling does not change decisions") {
  auto ds = fixture::blobs(80, 2.0, 4);
  const auto probe = train_linear_probe(ds);
  auto scaled = ds;
  scaled.features.col(0) = scaled.features.col(0).array() * 4.0 + 10.0;
  scaled.features.col(1) = scaled.features.col(1).array() * 0.25 - 3.0;
  const auto probe2 = train_linear_probe(scaled);
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    CHECK(predict(probe, ds.features, i).label == predict(probe2, scaled.features, i).label);
}

TEST_CASE("prediction edge cases") {
  ProbeModel zero;
  zero.weights = Eigen::VectorXd::Zero(3);
  zero.mean = Eigen::VectorXd::Zero(3);
  zero.scale = Eigen::VectorXd::Ones(3);
  const std::vector<double> x = {1.0, -4.0, 2.5};
  CHECK(predict(zero, x).probability == 0.5);
  const std::vector<double> wrong = {1.0};
  CHECK_THROWS_AS(predict(zero, wrong), ProbeError);

  const auto ds = fixture::blobs(50, 2.0, 5);
  const auto probe = train_linear_probe(ds);
  auto flipped = probe;
  flipped.weights = -probe.weights;
  flipped.bias = -probe.bias;
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    const auto p = predict(probe, ds.features, i);
    if (p.probability == 0.5) continue;
    CHECK(predict(flipped, ds.features, i).label == 1 - p.label);
  }
  auto constant = ds;
  constant.features.col(1).setConstant(3.0);
  CHECK(train_linear_probe(constant).scale(1) == 1.0);
}

TEST_CASE("dataset assembly and balancing") {
  std::vector<LabeledExample> examples;
  for (std::uint32_t i = 0; i < 100; ++i)
    examples.push_back(fixture::example(i, Label::CK, "g", "s", "o", "c"));
  for (std::uint32_t i = 100; i < 140; ++i)
    examples.push_back(fixture::example(i, Label::PK, "g", "s", "o", "c"));
  examples.push_back(fixture::example(140, Label::ND, "g", "s", "o", "c"));
  const auto store = fixture::random_store(examples, kMeta, 6);

  const auto ds = assemble_dataset(store, 1, ModuleKind::MLP_L1, TokenRole::OBJECT, examples);
  CHECK(ds.size() == 140);
  CHECK(ds.count(0) == 100);
  CHECK(ds.count(1) == 40);
  const auto* rec = store.find(105, 1, ModuleKind::MLP_L1, TokenRole::OBJECT);
  for (int j = 0; j < 6; ++j) CHECK(ds.features(105, j) == static_cast<double>(rec->vector[j]));

  CHECK_THROWS_AS(assemble_dataset(store, 2, ModuleKind::MLP_L1, TokenRole::OBJECT, examples),
                  ProbeError);

  const auto balanced = undersample_balance(ds, 1);
  CHECK(balanced.count(0) == 40);
  CHECK(balanced.count(1) == 40);
  const auto again = undersample_balance(balanced, 2);
  CHECK(again.example_ids.size() == 80);
  std::vector<std::uint32_t> a = balanced.example_ids, b = again.example_ids;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK(undersample_balance(ds, 1).example_ids == balanced.example_ids);
  CHECK(undersample_balance(ds, 7).example_ids != balanced.example_ids);

  CHECK_THROWS_AS(undersample_balance(ds.select(std::vector<std::size_t>{0, 1, 2}), 1), ProbeError);
}

TEST_CASE("probe files round-trip") {
  TempDir tmp;
  const auto ds = fixture::blobs(40, 3.0, 8);
  const auto probe = train_linear_probe(ds);
  save_probe(tmp.path(), probe, {3, ModuleKind::MHSA, TokenRole::RELATION_Q}, ds.size());
  const auto back = load_probe(tmp.path());
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    CHECK(predict(back, ds.features, i).label == predict(probe, ds.features, i).label);
  CHECK(back.weights.cast<float>() == probe.weights.cast<float>());
}
