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

#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace morphprobe::stats {

struct GroupSummary {
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // denominator n - 1; 0 when n == 1
  double median = 0.0;
  std::size_t pass_count = 0;
  double pass_rate = 0.0;
};

/// A score passes when score >= threshold. Empty input is a domain error.
GroupSummary group_summary(std::span<const double> scores, double threshold = 1.0, std::string group = {});

struct GroupComparison {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
  double d = 0.0;  // Cohen's d with the pooled sd
};

/// Student's two-sample t with pooled variance, df = n1 + n2 - 2. Both
/// groups need n >= 2. Zero pooled variance gives t = 0, p = 1 when the
/// means agree and a degenerate-variance error otherwise.
GroupComparison pooled_t(std::span<const double> g1, std::span<const double> g2);

/// Same statistic from published summaries (sd with denominator n - 1).
GroupComparison t_from_summary(double mean1, double sd1, std::size_t n1, double mean2, double sd2, std::size_t n2);

/// Welch's unequal-variance t with Welch-Satterthwaite df. d is still the
/// pooled Cohen's d so the effect size column means one thing.
GroupComparison welch_t(std::span<const double> g1, std::span<const double> g2);

/// Two-tailed P(|T| > |t|) for Student's t with `df` degrees of freedom,
/// as I_{df/(df+t^2)}(df/2, 1/2). df need not be an integer.
double p_from_t(double t, double df);

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

}  // namespace morphprobe::stats
