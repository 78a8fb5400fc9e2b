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

// Univariate-model feature ranking: each feature's true values are fed
// through the trained model with every other input set to zero.

#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "soundexpl/metrics.hpp"
#include "soundexpl/neural.hpp"
#include "soundexpl/sparse.hpp"

namespace soundexpl {

struct RankedFeature {
  std::string name;
  std::size_t column = 0;
  double auc = 0.5;
};

struct FeatureRanking {
  std::vector<RankedFeature> entries;  // descending AUC, ties by name
};

inline std::string feature_name(const MlpModel& m, std::size_t i) {
  return i < m.feature_names.size() ? m.feature_names[i] : "f" + std::to_string(i);
}

inline FeatureRanking univariate_model_auc(const MlpModel& model, const SparseMatrix& x, std::span<const int> labels) {
  check_columns(model, x.cols());
  if (labels.size() != x.rows()) throw ValidationError("ranking: label count mismatch");
  const FoldedMlp f = fold(model, Gating::Hard);
  Activations act;
  const double zero_score = forward_row(f, {}, act);

  // Column-major view of the nonzeros.
  std::vector<std::vector<std::pair<std::size_t, double>>> by_col(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& e : x.row(r)) by_col[e.col].emplace_back(r, e.value);

  FeatureRanking out;
  std::vector<double> scores(x.rows());
  for (std::size_t i = 0; i < x.cols(); ++i) {
    std::fill(scores.begin(), scores.end(), zero_score);
    for (const auto& [r, v] : by_col[i]) {
      const SparseEntry single{i, v};
      scores[r] = forward_row(f, std::span<const SparseEntry>(&single, 1), act);
    }
    out.entries.push_back({feature_name(model, i), i, auc(scores, labels)});
  }
  std::stable_sort(out.entries.begin(), out.entries.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.auc != b.auc) return a.auc > b.auc;
    return a.name < b.name;
  });
  return out;
}

// `stage_of` maps a feature name to the deepest stage that selected it.
inline std::string ranking_to_csv(const FeatureRanking& r, const std::map<std::string, std::string>& stage_of = {}) {
  std::string out = "feature,univariate_auc,stage_selected\n";
  for (const auto& e : r.entries) {
    const auto it = stage_of.find(e.name);
    out += e.name + "," + format_double(e.auc) + "," + (it == stage_of.end() ? "" : it->second) + "\n";
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Horizontal bar chart, bars start at AUC 0.5.
inline std::string ranking_to_svg(const FeatureRanking& r, std::size_t max_rows = 40) {
  const std::size_t n = std::min(max_rows, r.entries.size());
  const int row_h = 18, label_w = 220, bar_w = 400, top = 30;
  const int height = top + static_cast<int>(n) * row_h + 20;
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                label_w + bar_w + 80, height);
  out += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"18\">univariate model AUC</text>\n", label_w);
  out += buf;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = r.entries[i];
    const int y = top + static_cast<int>(i) * row_h;
    const double w = std::clamp((e.auc - 0.5) / 0.5, 0.0, 1.0) * bar_w;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", label_w - 6, y + 13);
    out += buf + xml_escape(e.name) + "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"%.2f\" height=\"%d\" fill=\"#4878a8\"/>\n", label_w,
                  y + 2, w, row_h - 4);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%d\">%.4f</text>\n", label_w + w + 4, y + 13, e.auc);
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace soundexpl
