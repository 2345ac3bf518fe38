#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cprobe/backend.hpp"

namespace cprobe {

/// Whitespace/punctuation splitter over a closed vocabulary.
///
/// A piece is either a run of alphanumeric characters or a single punctuation
/// character. A piece preceded by whitespace is looked up as " piece" and its
/// span starts at the whitespace, so span texts concatenate back to the input
/// (runs of whitespace collapse to one space in the vocabulary key only).
/// Pieces missing from the vocabulary map to the <unk> id.
class ToyTokenizer {
 public:
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";

  ToyTokenizer();
  explicit ToyTokenizer(std::vector<std::string> vocab);

  /// Vocabulary built from every piece in `corpus`, sorted, plus specials.
  static ToyTokenizer build(const std::vector<std::string>& corpus);

  std::vector<TokenSpan> tokenize(std::string_view text) const;
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  int eos_id() const { return eos_id_; }
  int unk_id() const { return unk_id_; }
  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::string& piece(int id) const { return vocab_.at(id); }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  int eos_id_ = 0;
  int unk_id_ = 1;
};

/// Raw pieces (with the leading-space convention) without id lookup.
std::vector<std::string> split_pieces(std::string_view text);

}  // namespace cprobe
