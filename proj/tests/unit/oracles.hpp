#pragma once

// Reference computations written independently of the library, used to check
// library results on inputs where no hand-derived value exists.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

inline double jaro_winkler(std::string a, std::string b) {
  for (auto& c : a) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto& c : b) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (a == b) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  const int la = static_cast<int>(a.size()), lb = static_cast<int>(b.size());
  const int window = std::max(0, std::max(la, lb) / 2 - 1);
  std::vector<bool> used(b.size(), false);
  std::string ma, mb;
  std::vector<int> a_pos;
  for (int i = 0; i < la; ++i) {
    for (int j = std::max(0, i - window); j <= std::min(lb - 1, i + window); ++j) {
      if (!used[j] && a[i] == b[j]) {
        used[j] = true;
        ma.push_back(a[i]);
        break;
      }
    }
  }
  for (int j = 0; j < lb; ++j)
    if (used[j]) mb.push_back(b[j]);
  const double m = static_cast<double>(ma.size());
  if (m == 0) return 0.0;
  int half = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) half += ma[i] != mb[i];
  const double jaro = (m / la + m / lb + (m - half / 2.0) / m) / 3.0;
  int l = 0;
  while (l < 4 && l < la && l < lb && a[l] == b[l]) ++l;
  return jaro + l * 0.1 * (1 - jaro);
}

/// One-sided P(U >= u_obs) by enumerating every subset of the pooled sample
/// as the first group (bitmask), using pairwise counting for U.
inline double mann_whitney_exact_greater(const std::vector<double>& a,
                                         const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const int n = static_cast<int>(pooled.size());
  const int na = static_cast<int>(a.size());
  auto u_of = [&](std::uint32_t mask) {
    double u = 0;
    for (int i = 0; i < n; ++i) {
      if (!(mask >> i & 1u)) continue;
      for (int j = 0; j < n; ++j) {
        if (mask >> j & 1u) continue;
        u += pooled[i] > pooled[j] ? 1.0 : pooled[i] == pooled[j] ? 0.5 : 0.0;
      }
    }
    return u;
  };
  const double observed = u_of((1u << na) - 1u);
  double hits = 0, total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != na) continue;
    total += 1;
    if (u_of(mask) >= observed - 1e-12) hits += 1;
  }
  return hits / total;
}

/// Occurrences of `needle` words as consecutive whole tokens in `text`, with
/// tokens being alphanumeric runs or single punctuation characters.
inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(c);
      continue;
    }
    if (!cur.empty()) out.push_back(cur), cur.clear();
    if (!std::isspace(u)) out.push_back(std::string(1, c));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::uint64_t count_occurrences(const std::vector<std::string>& docs,
                                       const std::string& needle) {
  const auto n = words(needle);
  std::uint64_t count = 0;
  for (const auto& d : docs) {
    const auto w = words(d);
    for (std::size_t i = 0; i + n.size() <= w.size(); ++i) {
      bool ok = !n.empty();
      for (std::size_t k = 0; k < n.size() && ok; ++k) ok = w[i + k] == n[k];
      count += ok;
    }
  }
  return count;
}

}  // namespace oracle
