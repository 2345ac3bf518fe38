#include "cprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace cprobe {
namespace {

/// Midranks of the pooled sample (a followed by b), 1-based.
std::vector<double> pooled_midranks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
    i = j + 1;
  }
  return ranks;
}

double tie_term(const std::vector<double>& a, const std::vector<double>& b) {
  std::map<double, std::size_t> counts;
  for (double v : a) ++counts[v];
  for (double v : b) ++counts[v];
  double sum = 0.0;
  for (const auto& [v, t] : counts) {
    const double td = static_cast<double>(t);
    sum += td * td * td - td;
  }
  return sum;
}

}  // namespace

double standard_error(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("standard_error: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("standard_error: p outside [0,1]");
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

GroupResult make_group_result(std::string group_id, double p, std::size_t n) {
  return {std::move(group_id), n, p, standard_error(p, n)};
}

AggregateResult aggregate(const std::vector<GroupResult>& groups) {
  if (groups.empty()) throw std::invalid_argument("aggregate: no groups");
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.n == 0) throw std::invalid_argument("aggregate: group " + g.group_id + " is empty");
    total += static_cast<double>(g.n);
  }
  AggregateResult r;
  r.groups = groups;
  double weighted = 0.0;
  double var = 0.0;
  for (const auto& g : groups) {
    const double w = static_cast<double>(g.n) / total;
    weighted += static_cast<double>(g.n) * g.p;
    var += (w * g.se) * (w * g.se);
  }
  r.P = weighted / total;
  r.WSE = std::sqrt(var);
  r.ci_low = r.P - kZ95 * r.WSE;
  r.ci_high = r.P + kZ95 * r.WSE;
  return r;
}

std::vector<std::pair<double, double>> mann_whitney_exact_distribution(
    const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t na = a.size();
  const std::size_t n = na + b.size();
  if (na == 0 || b.empty()) throw std::invalid_argument("mann_whitney: empty sample");
  const auto ranks = pooled_midranks(a, b);
  const double offset = static_cast<double>(na * (na + 1)) / 2.0;

  // Midranks are multiples of 1/2, so U is keyed exactly by 2U.
  std::map<long long, unsigned long long> counts;
  unsigned long long total = 0;
  std::vector<int> pick(n, 0);
  std::fill(pick.end() - static_cast<std::ptrdiff_t>(na), pick.end(), 1);
  do {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) rank_sum += ranks[i];
    ++counts[std::llround(2.0 * (rank_sum - offset))];
    ++total;
  } while (std::next_permutation(pick.begin(), pick.end()));

  std::vector<std::pair<double, double>> dist;
  for (const auto& [twice_u, c] : counts)
    dist.emplace_back(static_cast<double>(twice_u) / 2.0,
                      static_cast<double>(c) / static_cast<double>(total));
  return dist;
}

double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b,
                             double u_a) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;
  const double mu = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - tie_term(a, b) / (n * (n - 1.0)));
  if (var <= 0.0) return u_a >= mu ? 1.0 : 0.0;
  const double z = (u_a - mu - 0.5) / std::sqrt(var);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t exact_limit) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann_whitney: empty sample");
  const auto ranks = pooled_midranks(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];

  MannWhitneyResult r;
  r.u_a = rank_sum_a - na * (na + 1.0) / 2.0;
  r.u_b = na * nb - r.u_a;
  if (a.size() <= exact_limit && b.size() <= exact_limit) {
    r.exact = true;
    r.p_greater = 0.0;
    r.p_less = 0.0;
    for (const auto& [u, prob] : mann_whitney_exact_distribution(a, b)) {
      if (u >= r.u_a) r.p_greater += prob;
      if (u <= r.u_a) r.p_less += prob;
    }
  } else {
    r.p_greater = mann_whitney_normal_p(a, b, r.u_a);
    r.p_less = mann_whitney_normal_p(b, a, r.u_b);
  }
  r.p_greater = std::min(1.0, r.p_greater);
  r.p_less = std::min(1.0, r.p_less);
  return r;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace cprobe
