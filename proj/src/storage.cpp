#include "cprobe/storage.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "cprobe/jsonl.hpp"

namespace cprobe {
namespace {

constexpr std::size_t kMagicSize = sizeof(kStoreMagic);
constexpr std::size_t kRecordHeader = 4 + 2 + 1 + 1 + 4;

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}
std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::string encode_record(const ActivationRecord& r) {
  std::string buf;
  buf.reserve(kRecordHeader + r.vector.size() * 4);
  put_u32(buf, r.example_id);
  put_u16(buf, r.layer);
  buf.push_back(static_cast<char>(r.module));
  buf.push_back(static_cast<char>(r.token_role));
  put_u32(buf, static_cast<std::uint32_t>(r.vector.size()));
  for (float f : r.vector) put_u32(buf, std::bit_cast<std::uint32_t>(f));
  return buf;
}

json header_json(const BackendMeta& meta, std::size_t records, std::uint64_t payload_bytes) {
  return {{"format", "APRB1"},
          {"model_name", meta.model_name},
          {"num_layers", meta.num_layers},
          {"dims",
           {{"mlp_l1", meta.dim(ModuleKind::MLP_L1)},
            {"mlp_l2", meta.dim(ModuleKind::MLP_L2)},
            {"mhsa", meta.dim(ModuleKind::MHSA)}}},
          {"records", records},
          {"payload_bytes", payload_bytes}};
}

json entry_json(const ActivationAddress& a, std::uint64_t offset) {
  return {{"example_id", std::get<0>(a)},
          {"layer", std::get<1>(a)},
          {"module", std::string(to_string(std::get<2>(a)))},
          {"role", std::string(to_string(std::get<3>(a)))},
          {"offset", offset}};
}

void write_manifest(const std::filesystem::path& path, const BackendMeta& meta,
                    const std::vector<std::pair<ActivationAddress, std::uint64_t>>& entries,
                    std::uint64_t payload_bytes) {
  std::vector<json> rows;
  rows.reserve(entries.size() + 1);
  rows.push_back(header_json(meta, entries.size(), payload_bytes));
  for (const auto& [addr, off] : entries) rows.push_back(entry_json(addr, off));
  write_jsonl(manifest_path(path), rows);
}

ActivationAddress address_of(const ActivationRecord& r) {
  return {r.example_id, r.layer, r.module, r.token_role};
}

}  // namespace

void ActivationStore::add(ActivationRecord record) {
  if (record.layer >= meta_.num_layers)
    throw StorageError("layer " + std::to_string(record.layer) + " outside model");
  if (static_cast<int>(record.vector.size()) != meta_.dim(record.module))
    throw StorageError("dimension mismatch for module " + std::string(to_string(record.module)) +
                       ": got " + std::to_string(record.vector.size()) + ", expected " +
                       std::to_string(meta_.dim(record.module)));
  for (float f : record.vector)
    if (!std::isfinite(f)) throw StorageError("non-finite activation value");
  auto [it, inserted] = index_.emplace(address_of(record), records_.size());
  if (!inserted)
    throw StorageError("duplicate activation record for example " +
                       std::to_string(record.example_id));
  records_.push_back(std::move(record));
}

const ActivationRecord* ActivationStore::find(std::uint32_t example_id, int layer,
                                              ModuleKind module, TokenRole role) const {
  auto it = index_.find({example_id, static_cast<std::uint16_t>(layer), module, role});
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::filesystem::path manifest_path(const std::filesystem::path& store_path) {
  return std::filesystem::path(store_path.string() + ".manifest.jsonl");
}

void write_store(const std::filesystem::path& path, const ActivationStore& store) {
  StoreWriter writer(path, store.meta());
  for (const auto& r : store.records()) writer.append(r);
  writer.finish();
}

ActivationStore read_store(const std::filesystem::path& path) {
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(path))
    throw StorageError("missing activation store " + path.string() + " (run capture)");
  if (!std::filesystem::exists(mpath))
    throw StorageError("missing manifest " + mpath.string() + " (incomplete capture?)");

  std::vector<json> manifest;
  try {
    manifest = read_jsonl(mpath);
  } catch (const std::exception& e) {
    throw StorageError(e.what());
  }
  if (manifest.empty() || manifest[0].value("format", "") != "APRB1")
    throw StorageError(mpath.string() + ": bad manifest header");
  const json& header = manifest[0];
  BackendMeta meta;
  try {
    meta.model_name = header.at("model_name").get<std::string>();
    meta.num_layers = header.at("num_layers").get<int>();
    for (auto m : kAllModules)
      meta.dims[m] = header.at("dims").at(std::string(to_string(m))).get<int>();
  } catch (const json::exception& e) {
    throw StorageError(mpath.string() + ": " + e.what());
  }
  const auto expected_records = header.at("records").get<std::size_t>();
  const auto expected_bytes = header.at("payload_bytes").get<std::uint64_t>();
  if (manifest.size() != expected_records + 1)
    throw StorageError(mpath.string() + ": manifest lists " +
                       std::to_string(manifest.size() - 1) + " entries, header says " +
                       std::to_string(expected_records));

  std::ifstream in(path, std::ios::binary);
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() < kMagicSize || std::memcmp(payload.data(), kStoreMagic, kMagicSize) != 0)
    throw StorageError(path.string() + ": bad magic");
  if (payload.size() < expected_bytes)
    throw StorageError(path.string() + ": truncated payload (" + std::to_string(payload.size()) +
                       " of " + std::to_string(expected_bytes) + " bytes)");
  if (payload.size() > expected_bytes)
    throw StorageError(path.string() + ": payload longer than manifest records");

  ActivationStore store(meta);
  const auto* data = reinterpret_cast<const unsigned char*>(payload.data());
  std::size_t off = kMagicSize;
  for (std::size_t i = 0; i < expected_records; ++i) {
    if (payload.size() - off < kRecordHeader)
      throw StorageError(path.string() + ": truncated record header at byte " + std::to_string(off));
    const std::size_t record_start = off;
    ActivationRecord r;
    r.example_id = get_u32(data + off);
    r.layer = get_u16(data + off + 4);
    const auto module = data[off + 6];
    const auto role = data[off + 7];
    const std::uint32_t dim = get_u32(data + off + 8);
    off += kRecordHeader;
    if (module > 2 || role > 3)
      throw StorageError(path.string() + ": corrupt record at byte " + std::to_string(record_start));
    r.module = static_cast<ModuleKind>(module);
    r.token_role = static_cast<TokenRole>(role);
    if ((payload.size() - off) / 4 < dim)
      throw StorageError(path.string() + ": truncated vector at byte " + std::to_string(off));
    r.vector.resize(dim);
    for (std::uint32_t k = 0; k < dim; ++k, off += 4)
      r.vector[k] = std::bit_cast<float>(get_u32(data + off));

    const json& entry = manifest[i + 1];
    try {
      if (entry.at("offset").get<std::uint64_t>() != record_start ||
          entry.at("example_id").get<std::uint32_t>() != r.example_id ||
          entry.at("layer").get<std::uint16_t>() != r.layer ||
          module_from_string(entry.at("module").get<std::string>()) != r.module ||
          role_from_string(entry.at("role").get<std::string>()) != r.token_role)
        throw StorageError(path.string() + ": manifest entry " + std::to_string(i) +
                           " does not match payload record");
    } catch (const json::exception& e) {
      throw StorageError(mpath.string() + ": " + e.what());
    }
    try {
      store.add(std::move(r));
    } catch (const StorageError& e) {
      throw StorageError(path.string() + ": record " + std::to_string(i) + ": " + e.what());
    }
  }
  if (off != payload.size()) throw StorageError(path.string() + ": trailing bytes after records");
  return store;
}

StoreWriter::StoreWriter(const std::filesystem::path& path, BackendMeta meta)
    : path_(path), meta_(std::move(meta)) {
  meta_.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::remove(manifest_path(path));
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw StorageError("cannot write " + path.string());
  out_.write(kStoreMagic, kMagicSize);
  offset_ = kMagicSize;
}

StoreWriter::~StoreWriter() = default;

void StoreWriter::append(const ActivationRecord& r) {
  if (finished_) throw StorageError("store already finished");
  if (static_cast<int>(r.vector.size()) != meta_.dim(r.module))
    throw StorageError("dimension mismatch for module " + std::string(to_string(r.module)));
  const std::string buf = encode_record(r);
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  entries_.emplace_back(address_of(r), offset_);
  offset_ += buf.size();
}

void StoreWriter::finish() {
  if (finished_) return;
  out_.flush();
  if (!out_) throw StorageError("write failed for " + path_.string());
  out_.close();
  write_manifest(path_, meta_, entries_, offset_);
  finished_ = true;
}

}  // namespace cprobe
