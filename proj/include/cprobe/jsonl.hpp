#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cprobe {

using json = nlohmann::json;

/// Calls `fn(line_number, record)` for every non-blank line. Parse failures
/// are reported with the 1-based line number.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record: " + e.what());
    }
    fn(line_no, record);
  }
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  read_jsonl(path, [&](std::size_t, const json& j) { out.push_back(j); });
  return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace cprobe
