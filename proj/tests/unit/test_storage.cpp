#include <cstring>
#include <fstream>
#include <limits>

#include "cprobe/rng.hpp"
#include "cprobe/storage.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using namespace cprobe;

namespace {

BackendMeta meta(int layers = 3) {
  return {"toy", layers, {{ModuleKind::MLP_L1, 12}, {ModuleKind::MLP_L2, 5}, {ModuleKind::MHSA, 5}}};
}

ActivationStore random_store(std::size_t examples, std::uint64_t seed) {
  const auto m = meta();
  ActivationStore store(m);
  Rng rng(seed);
  for (std::uint32_t e = 0; e < examples; ++e)
    for (int l = 0; l < m.num_layers; ++l)
      for (auto mod : kAllModules) {
        if (rng.below(3) == 0) continue;
        ActivationRecord r{e * 7 + 3, static_cast<std::uint16_t>(l), mod,
                           kAllRoles[rng.below(kAllRoles.size())], {}};
        r.vector.resize(static_cast<std::size_t>(m.dim(mod)));
        for (auto& v : r.vector) v = static_cast<float>(rng.normal() * 1e3);
        if (store.find(r.example_id, l, mod, r.token_role)) continue;
        store.add(std::move(r));
      }
  return store;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool bitwise_equal(const ActivationStore& a, const ActivationStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.records()[i];
    const auto& y = b.records()[i];
    if (x.example_id != y.example_id || x.layer != y.layer || x.module != y.module ||
        x.token_role != y.token_role || x.vector.size() != y.vector.size())
      return false;
    if (std::memcmp(x.vector.data(), y.vector.data(), x.vector.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("store round-trip") {
  TempDir tmp;
  const auto path = tmp.path() / "acts.aprb";

  SUBCASE("small") {
    auto store = random_store(6, 1);
    write_store(path, store);
    CHECK(bitwise_equal(read_store(path), store));
  }
  SUBCASE("ten thousand records") {
    const auto store = random_store(1700, 2);
    REQUIRE(store.size() >= 10000);
    write_store(path, store);
    const auto back = read_store(path);
    CHECK(bitwise_equal(back, store));
    CHECK(back.meta().model_name == "toy");
    CHECK(back.meta().dim(ModuleKind::MLP_L1) == 12);
  }
  SUBCASE("empty") {
    write_store(path, ActivationStore(meta()));
    CHECK(read_store(path).size() == 0);
    CHECK(slurp(path).size() == sizeof kStoreMagic);
  }
}

TEST_CASE("store layout") {
  TempDir tmp;
  const auto path = tmp.path() / "one.aprb";
  ActivationStore store(meta());
  store.add({0x01020304u, 2, ModuleKind::MHSA, TokenRole::RELATION_Q, {1.0f, -2.0f, 0.5f, 0, 3}});
  write_store(path, store);
  const auto bytes = slurp(path);
  REQUIRE(bytes.size() == 6 + 4 + 2 + 1 + 1 + 4 + 5 * 4);
  CHECK(bytes.substr(0, 6) == std::string("APRB1\0", 6));
  CHECK(static_cast<unsigned char>(bytes[6]) == 0x04);
  CHECK(static_cast<unsigned char>(bytes[9]) == 0x01);
  CHECK(static_cast<unsigned char>(bytes[10]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);  // mhsa
  CHECK(static_cast<unsigned char>(bytes[13]) == 2);  // relation_q
  CHECK(static_cast<unsigned char>(bytes[14]) == 5);
  float first;
  std::memcpy(&first, bytes.data() + 18, 4);
  CHECK(first == 1.0f);
  CHECK(std::filesystem::exists(manifest_path(path)));

  // Identical inputs give identical files.
  write_store(tmp.path() / "two.aprb", store);
  CHECK(slurp(tmp.path() / "two.aprb") == bytes);
  CHECK(slurp(manifest_path(tmp.path() / "two.aprb")) == slurp(manifest_path(path)));
}

TEST_CASE("corruption is detected") {
  TempDir tmp;
  const auto path = tmp.path() / "acts.aprb";
  const auto store = random_store(20, 3);
  write_store(path, store);
  const auto size = std::filesystem::file_size(path);

  SUBCASE("truncated by one byte") {
    std::filesystem::resize_file(path, size - 1);
    CHECK_THROWS_AS(read_store(path), StorageError);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(read_store(path), StorageError);
  }
  SUBCASE("trailing bytes") {
    std::ofstream(path, std::ios::binary | std::ios::app).put('\0');
    CHECK_THROWS_AS(read_store(path), StorageError);
  }
  SUBCASE("missing manifest") {
    std::filesystem::remove(manifest_path(path));
    CHECK_THROWS_AS(read_store(path), StorageError);
  }
}

TEST_CASE("store validation") {
  ActivationStore store(meta());
  CHECK_THROWS_AS(store.add({1, 0, ModuleKind::MLP_L2, TokenRole::FIRST, {1, 2}}), StorageError);
  CHECK_THROWS_AS(store.add({1, 0, ModuleKind::MLP_L2, TokenRole::FIRST,
                             {1, 2, 3, 4, std::numeric_limits<float>::quiet_NaN()}}),
                  StorageError);
  store.add({1, 0, ModuleKind::MLP_L2, TokenRole::FIRST, {1, 2, 3, 4, 5}});
  CHECK_THROWS_AS(store.add({1, 0, ModuleKind::MLP_L2, TokenRole::FIRST, {1, 2, 3, 4, 5}}),
                  StorageError);
  CHECK(store.find(1, 0, ModuleKind::MLP_L2, TokenRole::FIRST) != nullptr);
  CHECK(store.find(1, 1, ModuleKind::MLP_L2, TokenRole::FIRST) == nullptr);
}

TEST_CASE("streaming writer matches the batch writer") {
  TempDir tmp;
  const auto store = random_store(30, 4);
  write_store(tmp.path() / "batch.aprb", store);
  {
    StoreWriter w(tmp.path() / "stream.aprb", store.meta());
    for (const auto& r : store.records()) w.append(r);
    w.finish();
  }
  CHECK(slurp(tmp.path() / "stream.aprb") == slurp(tmp.path() / "batch.aprb"));
  CHECK(bitwise_equal(read_store(tmp.path() / "stream.aprb"), store));
}
