#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "cprobe/backend.hpp"

namespace cprobe {

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ActivationRecord {
  std::uint32_t example_id = 0;
  std::uint16_t layer = 0;
  ModuleKind module = ModuleKind::MLP_L1;
  TokenRole token_role = TokenRole::FIRST;
  std::vector<float> vector;

  bool operator==(const ActivationRecord&) const = default;
};

using ActivationAddress = std::tuple<std::uint32_t, std::uint16_t, ModuleKind, TokenRole>;

/// Activation records sharing one BackendMeta.
///
/// On disk: `<path>` holds the payload (magic "APRB1\0", then per record
/// u32 example_id, u16 layer, u8 module, u8 role, u32 dim, dim x f32, all
/// little-endian) and `<path>.manifest.jsonl` a header line followed by one
/// line per record with its address and byte offset.
class ActivationStore {
 public:
  ActivationStore() = default;
  explicit ActivationStore(BackendMeta meta) : meta_(std::move(meta)) {}

  const BackendMeta& meta() const { return meta_; }
  const std::vector<ActivationRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Validates dimension, finiteness, and address uniqueness.
  void add(ActivationRecord record);

  /// nullptr when the address is absent.
  const ActivationRecord* find(std::uint32_t example_id, int layer, ModuleKind module,
                               TokenRole role) const;

 private:
  BackendMeta meta_;
  std::vector<ActivationRecord> records_;
  std::map<ActivationAddress, std::size_t> index_;
};

inline constexpr char kStoreMagic[6] = {'A', 'P', 'R', 'B', '1', '\0'};

std::filesystem::path manifest_path(const std::filesystem::path& store_path);

void write_store(const std::filesystem::path& path, const ActivationStore& store);
/// Throws StorageError on bad magic, truncation, or manifest disagreement.
ActivationStore read_store(const std::filesystem::path& path);

/// Streams records to disk one at a time; the manifest is written by finish().
class StoreWriter {
 public:
  StoreWriter(const std::filesystem::path& path, BackendMeta meta);
  ~StoreWriter();
  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  void append(const ActivationRecord& record);
  void finish();

 private:
  std::filesystem::path path_;
  BackendMeta meta_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
  std::vector<std::pair<ActivationAddress, std::uint64_t>> entries_;
  bool finished_ = false;
};

}  // namespace cprobe
