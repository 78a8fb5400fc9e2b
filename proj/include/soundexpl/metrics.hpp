/*
 * Copyright 2026 The soundexpl Authors.
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

// ROC AUC (Mann-Whitney concordance) and stratified bootstrap intervals.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "soundexpl/error.hpp"
#include "soundexpl/rng.hpp"

namespace soundexpl {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline ClassCounts count_classes(std::span<const int> labels) {
  ClassCounts c;
  for (int y : labels) {
    if (y == 1) ++c.positives;
    else if (y == 0) ++c.negatives;
    else throw ValidationError("labels must be 0 or 1");
  }
  return c;
}

// Probability that a random positive outscores a random negative, ties
// credited one half. Average ranks, O(n log n).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  const ClassCounts counts = count_classes(labels);
  if (counts.positives == 0 || counts.negatives == 0)
    throw SingleClassError("auc undefined: only one class present");
  for (double s : scores)
    if (std::isnan(s)) throw NumericError("auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum keeps tied (half-integer) ranks exact.
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_group += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    // Ranks i+1..j average to (i+1+j)/2.
    twice_rank_sum += static_cast<double>(pos_in_group) * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double p = static_cast<double>(counts.positives);
  const double n = static_cast<double>(counts.negatives);
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * n);
}

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Percentile interval over resamples drawn within each class, so every
// replicate has both classes.
inline Interval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                             std::size_t n_boot, double level, std::uint64_t seed) {
  if (scores.size() != labels.size()) throw ValidationError("bootstrap: length mismatch");
  if (n_boot < 100) throw ValidationError("bootstrap: need at least 100 resamples");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("bootstrap: level must be in (0, 1)");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  const ClassCounts counts = count_classes(labels);
  if (counts.positives == 0 || counts.negatives == 0)
    throw SingleClassError("bootstrap undefined: only one class present");

  Rng rng(seed);
  std::vector<double> replicate_scores(scores.size());
  std::vector<int> replicate_labels(scores.size());
  for (std::size_t i = 0; i < pos.size(); ++i) replicate_labels[i] = 1;
  for (std::size_t i = pos.size(); i < scores.size(); ++i) replicate_labels[i] = 0;
  std::vector<double> aucs;
  aucs.reserve(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < pos.size(); ++i) replicate_scores[i] = pos[rng.index(pos.size())];
    for (std::size_t i = 0; i < neg.size(); ++i) replicate_scores[pos.size() + i] = neg[rng.index(neg.size())];
    aucs.push_back(auc(replicate_scores, replicate_labels));
  }
  std::sort(aucs.begin(), aucs.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(aucs, tail), quantile_sorted(aucs, 1.0 - tail)};
}

struct AucReport {
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
};

inline AucReport auc_report(std::span<const double> scores, std::span<const int> labels,
                            std::size_t n_boot, std::uint64_t seed) {
  AucReport r;
  r.auc = auc(scores, labels);
  const auto ci = bootstrap_ci(scores, labels, n_boot, 0.95, seed);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  const auto counts = count_classes(labels);
  r.n_pos = counts.positives;
  r.n_neg = counts.negatives;
  r.seed = seed;
  return r;
}

}  // namespace soundexpl
