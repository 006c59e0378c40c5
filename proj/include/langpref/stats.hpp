/*
 * Copyright 2026 The langpref Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Significance testing, multiple-comparison correction and power analysis.

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "langpref/error.hpp"

namespace langpref::stats {

enum class TestKind { kPaired, kIndependent };

inline std::string_view to_string(TestKind k) {
  return k == TestKind::kPaired ? "paired" : "independent";
}

inline TestKind test_kind_from_string(std::string_view s) {
  if (s == "paired") return TestKind::kPaired;
  if (s == "independent") return TestKind::kIndependent;
  throw ConfigError("unknown test kind '" + std::string(s) + "'");
}

struct TTestResult {
  double t_stat = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;  // mean(b) - mean(a)
  bool degenerate = false;       // zero variance; p is a limit value
};

// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(dist, -std::abs(t));
}

namespace detail {
inline TTestResult zero_variance(double mean_diff, double df) {
  TTestResult r;
  r.df = df;
  r.mean_difference = mean_diff;
  r.degenerate = true;
  if (mean_diff == 0.0) {
    r.t_stat = 0.0;
    r.p_value = 1.0;
  } else {
    r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), mean_diff);
    r.p_value = 0.0;
  }
  return r;
}
}  // namespace detail

// Paired two-sided t-test on the per-item differences b - a.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("paired t-test needs equal-length samples");
  const std::size_t n = a.size();
  if (n < 2) throw DomainError("paired t-test needs at least two pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += b[i] - a[i];
  mean /= double(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = b[i] - a[i] - mean;
    ss += d * d;
  }
  const double df = double(n - 1);
  const double var = ss / df;
  if (var == 0.0) return detail::zero_variance(mean, df);
  TTestResult r;
  r.df = df;
  r.mean_difference = mean;
  r.t_stat = mean / std::sqrt(var / double(n));
  r.p_value = two_sided_p(r.t_stat, df);
  return r;
}

// Two-sample Student t-test with pooled variance, two-sided.
inline TTestResult independent_t_test(std::span<const double> a,
                                      std::span<const double> b) {
  const std::size_t na = a.size(), nb = b.size();
  if (na < 2 || nb < 2) throw DomainError("independent t-test needs two samples of size >= 2");
  auto mean_of = [](std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    return m / double(x.size());
  };
  const double ma = mean_of(a), mb = mean_of(b);
  double ss = 0.0;
  for (double v : a) ss += (v - ma) * (v - ma);
  for (double v : b) ss += (v - mb) * (v - mb);
  const double df = double(na + nb - 2);
  const double pooled = ss / df;
  if (pooled == 0.0) return detail::zero_variance(mb - ma, df);
  TTestResult r;
  r.df = df;
  r.mean_difference = mb - ma;
  r.t_stat = (mb - ma) / std::sqrt(pooled * (1.0 / double(na) + 1.0 / double(nb)));
  r.p_value = two_sided_p(r.t_stat, df);
  return r;
}

inline double bonferroni(double p_raw, int family_size) {
  if (family_size < 1) throw DomainError("family size must be >= 1");
  return std::min(1.0, double(family_size) * p_raw);
}

inline std::string_view stars(double p_adjusted) {
  if (p_adjusted < 0.001) return "***";
  if (p_adjusted < 0.01) return "**";
  if (p_adjusted < 0.05) return "*";
  return "ns";
}

// Power of a two-sided two-sample t-test with `n` per group.
inline double two_sample_power(int n, double effect, double alpha) {
  const double df = 2.0 * n - 2.0;
  const double nc = effect * std::sqrt(n / 2.0);
  boost::math::students_t central(df);
  const double crit = boost::math::quantile(boost::math::complement(central, alpha / 2.0));
  boost::math::non_central_t shifted(df, nc);
  return boost::math::cdf(boost::math::complement(shifted, crit)) +
         boost::math::cdf(shifted, -crit);
}

// Smallest per-group sample size reaching `power`.
inline int required_sample_size(double effect, double alpha, double power,
                                int max_n = 10'000'000) {
  if (!(effect > 0.0)) throw DomainError("effect size must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0,1)");
  if (!(power > 0.0 && power < 1.0)) throw DomainError("power must be in (0,1)");
  if (power <= alpha) throw DomainError("power must exceed alpha");
  // Power grows with n; bracket, then bisect.
  int lo = 2;
  if (two_sample_power(lo, effect, alpha) >= power) return lo;
  int hi = 4;
  while (two_sample_power(hi, effect, alpha) < power) {
    lo = hi;
    if (hi >= max_n) throw DomainError("requested power unreachable below n = " + std::to_string(max_n));
    hi = std::min(max_n, hi * 2);
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (two_sample_power(mid, effect, alpha) >= power ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace langpref::stats
