// Copyright 2026 The morphprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "errors.hpp"

namespace morphprobe::stats {

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  m.n = xs.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n < 2) return m;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(m.n - 1));
  return m;
}

void check_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) fail(ErrorCode::kDomain, "non-finite score");
}

// Continued fraction for I_x(a, b), modified Lentz. Converges quickly for
// x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  fail(ErrorCode::kDomain, "incomplete beta continued fraction did not converge");
}

// I_x(a, b) with y = 1 - x supplied separately so callers can pass it
// without cancellation.
double incomplete_beta_xy(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, y) / b;
}

GroupComparison from_moments(const Moments& g1, const Moments& g2) {
  if (g1.n < 2 || g2.n < 2) fail(ErrorCode::kDomain, "each group needs at least two observations");
  if (g1.sd < 0.0 || g2.sd < 0.0 || !std::isfinite(g1.sd) || !std::isfinite(g2.sd))
    fail(ErrorCode::kDomain, "standard deviations must be finite and non-negative");
  const double n1 = static_cast<double>(g1.n);
  const double n2 = static_cast<double>(g2.n);
  GroupComparison c;
  c.df = n1 + n2 - 2.0;
  const double pooled_var = ((n1 - 1.0) * g1.sd * g1.sd + (n2 - 1.0) * g2.sd * g2.sd) / c.df;
  const double diff = g1.mean - g2.mean;
  if (pooled_var == 0.0) {
    if (diff != 0.0) fail(ErrorCode::kDegenerateVariance, "zero pooled variance with unequal means");
    return c;
  }
  const double pooled_sd = std::sqrt(pooled_var);
  c.t = diff / (pooled_sd * std::sqrt(1.0 / n1 + 1.0 / n2));
  c.d = diff / pooled_sd;
  c.p = p_from_t(c.t, c.df);
  return c;
}

}  // namespace

GroupSummary group_summary(std::span<const double> scores, double threshold, std::string group) {
  if (scores.empty()) fail(ErrorCode::kDomain, "group_summary of an empty group");
  check_finite(scores);
  const Moments m = moments(scores);
  GroupSummary s;
  s.group = std::move(group);
  s.n = m.n;
  s.mean = m.mean;
  s.sd = m.sd;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = s.n / 2;
  s.median = s.n % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  s.pass_count = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [&](double x) { return x >= threshold; }));
  s.pass_rate = static_cast<double>(s.pass_count) / static_cast<double>(s.n);
  return s;
}

GroupComparison pooled_t(std::span<const double> g1, std::span<const double> g2) {
  check_finite(g1);
  check_finite(g2);
  return from_moments(moments(g1), moments(g2));
}

GroupComparison t_from_summary(double mean1, double sd1, std::size_t n1, double mean2, double sd2, std::size_t n2) {
  if (!std::isfinite(mean1) || !std::isfinite(mean2)) fail(ErrorCode::kDomain, "non-finite mean");
  return from_moments(Moments{n1, mean1, sd1}, Moments{n2, mean2, sd2});
}

GroupComparison welch_t(std::span<const double> g1, std::span<const double> g2) {
  check_finite(g1);
  check_finite(g2);
  const Moments a = moments(g1);
  const Moments b = moments(g2);
  GroupComparison c = from_moments(a, b);  // validates sizes, gives pooled d
  const double n1 = static_cast<double>(a.n);
  const double n2 = static_cast<double>(b.n);
  const double v1 = a.sd * a.sd / n1;
  const double v2 = b.sd * b.sd / n2;
  if (v1 + v2 == 0.0) return c;
  c.t = (a.mean - b.mean) / std::sqrt(v1 + v2);
  c.df = (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
  c.p = p_from_t(c.t, c.df);
  return c;
}

double p_from_t(double t, double df) {
  if (!(df > 0.0) || std::isnan(t)) fail(ErrorCode::kDomain, "p_from_t needs df > 0 and a numeric t");
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return std::clamp(incomplete_beta_xy(0.5 * df, 0.5, x, y), 0.0, 1.0);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0))
    fail(ErrorCode::kDomain, "incomplete_beta needs a, b > 0 and x in [0, 1]");
  return incomplete_beta_xy(a, b, x, 1.0 - x);
}

}  // namespace morphprobe::stats
