#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cprobe {

inline constexpr double kZ95 = 1.96;

struct GroupResult {
  std::string group_id;
  std::size_t n = 0;  // test examples
  double p = 0.0;     // success rate
  double se = 0.0;
};

struct AggregateResult {
  double P = 0.0;    // weighted success rate
  double WSE = 0.0;  // weighted standard error
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<GroupResult> groups;
};

/// Binomial standard error sqrt(p(1-p)/n). Throws for n == 0 or p outside [0,1].
double standard_error(double p, std::size_t n);

/// Group result with its standard error filled in.
GroupResult make_group_result(std::string group_id, double p, std::size_t n);

/// P = sum n_i p_i / N, WSE = sqrt(sum (n_i/N * SE_i)^2), CI = P -/+ 1.96 WSE.
AggregateResult aggregate(const std::vector<GroupResult>& groups);

struct MannWhitneyResult {
  double u_a = 0.0;  // rank-sum statistic of sample a
  double u_b = 0.0;
  double p_greater = 1.0;  // one-sided, a stochastically greater than b
  double p_less = 1.0;     // one-sided, a stochastically less than b
  bool exact = false;
};

/// Midrank U statistic; exact enumeration when both samples have at most
/// `exact_limit` values, otherwise the tie- and continuity-corrected normal
/// approximation.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t exact_limit = 8);

/// Exact distribution of U_a under the null: (u, probability) pairs sorted by u.
std::vector<std::pair<double, double>> mann_whitney_exact_distribution(
    const std::vector<double>& a, const std::vector<double>& b);

/// Normal-approximation one-sided p-value P(U_a >= u) for the pooled sample.
double mann_whitney_normal_p(const std::vector<double>& a, const std::vector<double>& b,
                             double u_a);

double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& v);

}  // namespace cprobe
