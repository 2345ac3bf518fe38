#include <set>

#include "cprobe/evaluator.hpp"
#include "cprobe/synth.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "temp_dir.hpp"

using namespace cprobe;

namespace {

const BackendMeta kMeta{"fixture", 1, {{ModuleKind::MLP_L1, 4}, {ModuleKind::MLP_L2, 2},
                                       {ModuleKind::MHSA, 2}}};

// Examples over a synthetic KB: the counter-object is the next object of the
// same relation, labels alternate with a seeded coin.
std::vector<LabeledExample> kb_examples(int groups, std::uint64_t seed) {
  SynthOptions opt;
  opt.facts = 160;
  opt.groups = groups;
  opt.seed = seed;
  const auto kb = synthesize_kb(opt).kb;
  std::map<std::string, std::vector<std::string>> pools;
  for (const auto& t : kb.triplets()) pools[t.relation].push_back(t.object);
  Rng rng(seed);
  std::vector<LabeledExample> out;
  std::uint32_t id = 0;
  for (const auto& t : kb.triplets()) {
    const auto& pool = pools[t.relation];
    std::string counter;
    for (std::size_t k = 0; k < pool.size() && counter.empty(); ++k)
      if (pool[(k + id) % pool.size()] != t.object) counter = pool[(k + id) % pool.size()];
    if (counter.empty()) continue;
    out.push_back(fixture::example(id++, rng.below(3) == 0 ? Label::PK : Label::CK,
                                   kb.group_of(t.relation), t.subject, t.object, counter,
                                   t.relation));
  }
  return out;
}

ProbeDataset dataset_of(const std::vector<LabeledExample>& examples, double signal = 0.0) {
  const auto store = fixture::random_store(examples, kMeta, 11, signal);
  return assemble_dataset(store, 0, ModuleKind::MLP_L1, TokenRole::OBJECT, examples);
}

}  // namespace

TEST_CASE("leave-one-group-out splits are clean and balanced") {
  const auto ds = dataset_of(kb_examples(4, 3));
  const std::set<std::string> groups(ds.groups.begin(), ds.groups.end());
  REQUIRE(groups.size() == 4);
  for (const auto& g : groups) {
    const auto split = split_logo(ds, g, 5);
    REQUIRE_FALSE(split.skipped);
    CHECK(split.test.count(0) == split.test.count(1));
    CHECK(split.train.count(0) == split.train.count(1));
    CHECK(split.test.size() > 0);
    CHECK(split.train.size() > 0);
    std::set<std::string> test_subjects, test_objects;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      CHECK(split.test.groups[i] == g);
      test_subjects.insert(normalize_entity(split.test.subjects[i]));
      test_objects.insert(normalize_entity(split.test.objects[i]));
      test_objects.insert(normalize_entity(split.test.counter_objects[i]));
    }
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      CHECK(split.train.groups[i] != g);
      CHECK(test_subjects.count(normalize_entity(split.train.subjects[i])) == 0);
      CHECK(test_objects.count(normalize_entity(split.train.objects[i])) == 0);
      CHECK(test_objects.count(normalize_entity(split.train.counter_objects[i])) == 0);
    }
  }
}

TEST_CASE("a subject shared across groups leaves the training side") {
  std::vector<LabeledExample> examples = {
      fixture::example(0, Label::CK, "religion", "Anne Frank", "Judaism", "Islam"),
      fixture::example(1, Label::PK, "religion", "Pope Leo", "Catholicism", "Buddhism"),
      fixture::example(2, Label::CK, "media", "Anne Frank", "BBC", "CBS"),
      fixture::example(3, Label::PK, "media", "Friends", "NBC", "HBO"),
      fixture::example(4, Label::CK, "media", "Seinfeld", "NBC", "ABC"),
      fixture::example(5, Label::PK, "media", "Cheers", "NBC", "Fox"),
      fixture::example(6, Label::CK, "media", "Lost", "ABC", "CW"),
      fixture::example(7, Label::PK, "media", "Frasier", "NBC", "TNT"),
  };
  const auto ds = dataset_of(examples);
  const auto split = split_logo(ds, "religion", 1);
  REQUIRE_FALSE(split.skipped);
  for (auto id : split.train.example_ids) CHECK(id != 2);
  CHECK(split.test.size() == 2);

  // The media test group needs religion training rows; two rows with one
  // clashing subject cannot train.
  const auto media = split_logo(ds, "media", 1);
  CHECK(media.skipped);
  CHECK(media.note.find("train split too small") != std::string::npos);
}

TEST_CASE("every group is held out once") {
  const auto examples = kb_examples(8, 4);
  const auto ds = dataset_of(examples, 4.0);
  const auto result = evaluate_dataset(ds, {0, ModuleKind::MLP_L1, TokenRole::OBJECT}, 9);
  CHECK(result.aggregate.groups.size() + result.notes.size() == 8);
  CHECK(result.aggregate.groups.size() >= 6);
  CHECK(result.aggregate.P > 0.9);

  std::size_t n = 0;
  double weighted = 0.0;
  for (const auto& g : result.aggregate.groups) {
    n += g.n;
    weighted += static_cast<double>(g.n) * g.p;
  }
  CHECK(result.aggregate.P == doctest::Approx(weighted / static_cast<double>(n)).epsilon(1e-12));

  CHECK_THROWS_AS(split_logo(ds.select(std::vector<std::size_t>{0}), ds.groups[0], 1), ProbeError);
}

TEST_CASE("success rate") {
  const auto ds = fixture::blobs(30, 12.0, 2);
  const auto probe = train_linear_probe(ds);
  CHECK(success_rate(probe, ds) == 1.0);

  ProbeModel constant;
  constant.weights = Eigen::VectorXd::Zero(2);
  constant.mean = Eigen::VectorXd::Zero(2);
  constant.scale = Eigen::VectorXd::Ones(2);
  constant.bias = 0.3;
  CHECK(success_rate(constant, ds) == 0.5);

  const auto noisy = fixture::blobs(40, 0.5, 3);
  const auto p2 = train_linear_probe(noisy);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < noisy.features.rows(); ++i) {
    double z = p2.bias;
    for (Eigen::Index j = 0; j < noisy.features.cols(); ++j)
      z += p2.weights(j) * (noisy.features(i, j) - p2.mean(j)) / p2.scale(j);
    correct += (z > 0 ? 1 : 0) == noisy.labels[static_cast<std::size_t>(i)];
  }
  CHECK(success_rate(p2, noisy) == static_cast<double>(correct) / 80.0);

  CHECK_THROWS_AS(success_rate(p2, noisy.select(std::vector<std::size_t>{})), ProbeError);
}

TEST_CASE("label shuffling permutes only labels") {
  const auto ds = fixture::blobs(25, 1.0, 6);
  const auto s = shuffle_labels(ds, 3);
  CHECK(s.features == ds.features);
  CHECK(s.example_ids == ds.example_ids);
  CHECK(s.count(1) == ds.count(1));
  CHECK(s.labels != ds.labels);
  CHECK(shuffle_labels(ds, 3).labels == s.labels);
}

TEST_CASE("results round-trip and single-seed sweep") {
  TempDir tmp;
  const auto examples = kb_examples(4, 5);
  const auto store = fixture::random_store(examples, kMeta, 12, 3.0);
  const auto results = evaluate_store(store, examples, 2);
  CHECK(results.size() == all_addresses(kMeta).size());
  write_results(tmp.path() / "r.jsonl", results);
  const auto back = read_results(tmp.path() / "r.jsonl");
  REQUIRE(back.size() == results.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].address.layer == results[i].address.layer);
    CHECK(back[i].address.module == results[i].address.module);
    CHECK(back[i].address.role == results[i].address.role);
    CHECK(back[i].aggregate.P == results[i].aggregate.P);
    CHECK(back[i].aggregate.WSE == results[i].aggregate.WSE);
    CHECK(back[i].aggregate.groups.size() == results[i].aggregate.groups.size());
  }

  const auto sweep = seed_sweep(store, examples, {2});
  REQUIRE(sweep.rows.size() == results.size());
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    CHECK(sweep.rows[i].stddev == 0.0);
    CHECK(sweep.rows[i].mean == results[i].aggregate.P);
  }
}
