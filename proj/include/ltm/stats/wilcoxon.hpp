#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ltm/error.hpp"

namespace ltm::stats {

enum class TestMethod { ExactEnumeration, NormalApproximation };

// Auto picks the exact null distribution up to the size limits below.
enum class MethodChoice { Auto, Exact, Normal };

inline constexpr std::size_t kSignedRankExactMax = 20;
inline constexpr std::size_t kRankSumExactMaxTotal = 12;

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::ExactEnumeration;
  std::vector<std::size_t> n;
  bool degenerate = false;
};

inline std::string_view to_string(TestMethod m) {
  return m == TestMethod::ExactEnumeration ? "ExactEnumeration" : "NormalApproximation";
}

// Twice the midrank of each value (1-based ranks), so ties stay integral.
inline std::vector<long> doubled_midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<long> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
    const long doubled = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    i = j + 1;
  }
  return ranks;
}

inline std::vector<double> midranks(std::span<const double> values) {
  const auto doubled = doubled_midranks(values);
  std::vector<double> r(doubled.size());
  for (std::size_t i = 0; i < doubled.size(); ++i) r[i] = static_cast<double>(doubled[i]) / 2.0;
  return r;
}

namespace detail {

// Sum over tie groups of t^3 - t.
inline double tie_term(std::span<const long> doubled_ranks) {
  std::vector<long> sorted(doubled_ranks.begin(), doubled_ranks.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    total += t * t * t - t;
    i = j;
  }
  return total;
}

inline double two_sided_normal_p(double deviation, double variance) {
  if (variance <= 0.0) return 1.0;
  // continuity correction of half a rank
  const double z = std::max(0.0, std::fabs(deviation) - 0.5) / std::sqrt(variance);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace detail

// Two-sided Wilcoxon signed-rank test on paired observations. Differences are
// taken as after - before; zero differences are dropped before ranking. The
// statistic is W+, the rank sum of positive differences. The exact null is the
// distribution of W+ over all 2^n sign assignments of the (mid)ranks.
inline TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> paired,
                                       MethodChoice choice = MethodChoice::Auto) {
  require(!paired.empty(), "wilcoxon_signed_rank(): no pairs");
  std::vector<double> abs_diff;
  std::vector<bool> positive;
  for (const auto& [before, after] : paired) {
    const double d = after - before;
    if (d == 0.0) continue;
    abs_diff.push_back(std::fabs(d));
    positive.push_back(d > 0.0);
  }

  TestResult r;
  const std::size_t n = abs_diff.size();
  r.n = {n};
  if (n == 0) {
    r.degenerate = true;
    r.p_value = 1.0;
    r.method = TestMethod::ExactEnumeration;
    return r;
  }

  const auto ranks = doubled_midranks(abs_diff);
  long total2 = 0;
  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += ranks[i];
    if (positive[i]) w2 += ranks[i];
  }
  r.statistic = static_cast<double>(w2) / 2.0;
  // |W+ - E[W+]| in doubled units times two: |2 * w2 - total2|
  const long observed_dev = std::labs(2 * w2 - total2);

  const bool exact = choice == MethodChoice::Exact || (choice == MethodChoice::Auto && n <= kSignedRankExactMax);
  if (exact) {
    require(n <= 40, "wilcoxon_signed_rank(): exact null limited to 40 pairs");
    // counts[s] = number of sign assignments with doubled W+ == s
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long rk : ranks) {
      for (long s = reach; s >= 0; --s) {
        if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + rk)] += counts[static_cast<std::size_t>(s)];
      }
      reach += rk;
    }
    double extreme = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (std::labs(2 * s - total2) >= observed_dev) extreme += counts[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(n)));
    r.method = TestMethod::ExactEnumeration;
    return r;
  }

  const double nn = static_cast<double>(n);
  const double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - detail::tie_term(ranks) / 48.0;
  const double mean = nn * (nn + 1.0) / 4.0;
  r.p_value = detail::two_sided_normal_p(r.statistic - mean, variance);
  r.method = TestMethod::NormalApproximation;
  r.degenerate = variance <= 0.0;
  return r;
}

// Two-sided Wilcoxon rank-sum (Mann-Whitney) test. The statistic is the
// midrank sum of sample `a` in the pooled sample; the exact null enumerates all
// C(n_a + n_b, n_a) ways to assign the pooled ranks to `a`.
inline TestResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                    MethodChoice choice = MethodChoice::Auto) {
  require(!a.empty() && !b.empty(), "wilcoxon_rank_sum(): both samples must be non-empty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = doubled_midranks(pooled);
  const std::size_t na = a.size();
  const std::size_t total_n = pooled.size();

  long total2 = 0;
  long w2 = 0;
  for (std::size_t i = 0; i < total_n; ++i) {
    total2 += ranks[i];
    if (i < na) w2 += ranks[i];
  }
  TestResult r;
  r.n = {na, b.size()};
  r.statistic = static_cast<double>(w2) / 2.0;
  // E[W_a] in doubled units is total2 * na / N; compare N * w2 against total2 * na.
  const long N = static_cast<long>(total_n);
  const long observed_dev = std::labs(N * w2 - total2 * static_cast<long>(na));

  const bool exact =
      choice == MethodChoice::Exact || (choice == MethodChoice::Auto && total_n <= kRankSumExactMaxTotal);
  if (exact) {
    require(total_n <= 60, "wilcoxon_rank_sum(): exact null limited to 60 observations");
    // counts[k][s]: subsets of size k with doubled rank sum s
    const std::size_t width = static_cast<std::size_t>(total2) + 1;
    std::vector<std::vector<double>> counts(na + 1, std::vector<double>(width, 0.0));
    counts[0][0] = 1.0;
    for (std::size_t i = 0; i < total_n; ++i) {
      const auto rk = static_cast<std::size_t>(ranks[i]);
      for (std::size_t k = std::min(na, i + 1); k >= 1; --k) {
        for (std::size_t s = width; s-- > rk;) {
          if (counts[k - 1][s - rk] != 0.0) counts[k][s] += counts[k - 1][s - rk];
        }
      }
    }
    double extreme = 0.0;
    double all = 0.0;
    for (std::size_t s = 0; s < width; ++s) {
      const double c = counts[na][s];
      if (c == 0.0) continue;
      all += c;
      if (std::labs(N * static_cast<long>(s) - total2 * static_cast<long>(na)) >= observed_dev) extreme += c;
    }
    r.p_value = std::min(1.0, extreme / all);
    r.method = TestMethod::ExactEnumeration;
    r.degenerate = detail::tie_term(ranks) == static_cast<double>(total_n * total_n * total_n - total_n);
    return r;
  }

  const double nA = static_cast<double>(na);
  const double nB = static_cast<double>(b.size());
  const double Nd = static_cast<double>(total_n);
  const double mean = nA * (Nd + 1.0) / 2.0;
  const double variance = nA * nB / 12.0 * ((Nd + 1.0) - detail::tie_term(ranks) / (Nd * (Nd - 1.0)));
  r.p_value = detail::two_sided_normal_p(r.statistic - mean, variance);
  r.method = TestMethod::NormalApproximation;
  r.degenerate = variance <= 0.0;
  return r;
}

}  // namespace ltm::stats
