#include "cprobe/toy_tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace cprobe {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

struct RawPiece {
  std::string key;
  std::size_t start;
  std::size_t end;
};

std::vector<RawPiece> scan(std::string_view text) {
  std::vector<RawPiece> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t span_start = i;
    bool spaced = false;
    while (i < text.size() && is_space(text[i])) {
      spaced = true;
      ++i;
    }
    if (i == text.size()) break;  // trailing whitespace belongs to no piece
    std::size_t j = i;
    if (is_word(text[i])) {
      while (j < text.size() && is_word(text[j])) ++j;
    } else {
      j = i + 1;
    }
    std::string key = spaced ? " " : "";
    key.append(text.substr(i, j - i));
    out.push_back({std::move(key), span_start, j});
    i = j;
  }
  return out;
}

}  // namespace

ToyTokenizer::ToyTokenizer()
    : ToyTokenizer(std::vector<std::string>{std::string(kEos), std::string(kUnk)}) {}

ToyTokenizer::ToyTokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary entry '" + vocab_[i] + "'");
  }
  auto eos = index_.find(std::string(kEos));
  auto unk = index_.find(std::string(kUnk));
  if (eos == index_.end() || unk == index_.end())
    throw std::invalid_argument("vocabulary lacks <eos> or <unk>");
  eos_id_ = eos->second;
  unk_id_ = unk->second;
}

ToyTokenizer ToyTokenizer::build(const std::vector<std::string>& corpus) {
  std::set<std::string> pieces;
  for (const auto& line : corpus)
    for (auto& p : scan(line)) pieces.insert(std::move(p.key));
  pieces.erase(std::string(kEos));
  pieces.erase(std::string(kUnk));
  std::vector<std::string> vocab = {std::string(kEos), std::string(kUnk)};
  vocab.insert(vocab.end(), pieces.begin(), pieces.end());
  return ToyTokenizer(std::move(vocab));
}

std::vector<TokenSpan> ToyTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  for (auto& p : scan(text)) {
    auto it = index_.find(p.key);
    TokenSpan span;
    span.token_id = it == index_.end() ? unk_id_ : it->second;
    span.text = std::string(text.substr(p.start, p.end - p.start));
    span.char_start = p.start;
    span.char_end = p.end;
    out.push_back(std::move(span));
  }
  return out;
}

std::vector<int> ToyTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& s : tokenize(text)) ids.push_back(s.token_id);
  return ids;
}

std::string ToyTokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += piece(id);
  return out;
}

std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> out;
  for (auto& p : scan(text)) out.push_back(std::move(p.key));
  return out;
}

}  // namespace cprobe
