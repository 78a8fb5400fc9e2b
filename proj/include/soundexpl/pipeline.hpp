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

// Three-stage feature selection: BinMask training, iterative removal under
// an AUC budget, and retraining from scratch on the surviving features.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "soundexpl/error.hpp"
#include "soundexpl/metrics.hpp"
#include "soundexpl/neural.hpp"
#include "soundexpl/rng.hpp"
#include "soundexpl/sparse.hpp"

namespace soundexpl {

// ---------------------------------------------------------------------------
// Split.

struct SplitConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified by label; both index lists come back sorted.
inline Split stratified_split(std::span<const int> labels, const SplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw ValidationError("split: test fraction must be in (0, 1)");
  Rng rng(cfg.seed);
  Split s;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(idx.size())));
    s.test.insert(s.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  auto both = [&](const std::vector<std::size_t>& side) {
    bool pos = false, neg = false;
    for (std::size_t i : side) (labels[i] == 1 ? pos : neg) = true;
    return pos && neg;
  };
  if (!both(s.train) || !both(s.test)) throw SingleClassError("split error: a side is left with a single class");
  return s;
}

// ---------------------------------------------------------------------------
// Stages.

struct LabeledMatrix {
  SparseMatrix x;
  std::vector<int> y;
};

// Training data for one stage. `train` is the fixed-cutoff view used for
// scaling and evaluation; `refresh`, when set, supplies resampled
// minibatches over the same rows.
struct StageData {
  LabeledMatrix train;
  std::optional<LabeledMatrix> test;
  MinibatchRefresh refresh;
  std::vector<std::string> names;
};

struct StageResult {
  std::string stage;
  std::vector<std::size_t> selected;  // columns of the full matrix
  double train_auc = 0.0;
  std::optional<AucReport> test;
  MlpModel model;
  std::vector<EpochStats> history;
  // Input override used to evaluate the model at this stage (empty: hard gates).
  std::vector<std::uint8_t> input_on;
};

inline std::vector<std::uint8_t> selection_mask(std::size_t n, std::span<const std::size_t> selected) {
  std::vector<std::uint8_t> on(n, 0);
  for (std::size_t i : selected) {
    if (i >= n) throw ValidationError("selection index out of range");
    on[i] = 1;
  }
  return on;
}

inline double model_auc(const MlpModel& m, const LabeledMatrix& d, std::span<const std::uint8_t> input_on = {}) {
  return auc(forward(m, d.x, Gating::Hard, input_on), d.y);
}

struct StageOptions {
  std::size_t n_boot = 1000;
  std::uint64_t model_seed = 0;
  std::uint64_t bootstrap_seed = 0;
};

namespace detail {

inline MlpModel fresh_model(const StageData& data, std::span<const std::size_t> columns, std::uint64_t seed) {
  MlpConfig mc;
  mc.input_dim = data.train.x.cols();
  mc.seed = seed;
  MlpModel m = init_mlp(mc);
  fit_input_scale(m, data.train.x);
  for (std::size_t i = 0; i < mc.input_dim; ++i)
    m.feature_names.push_back(i < data.names.size() ? data.names[i] : "f" + std::to_string(i));
  m.feature_columns.assign(columns.begin(), columns.end());
  return m;
}

inline void finish_stage(StageResult& r, const StageData& data, const StageOptions& opt) {
  r.train_auc = model_auc(r.model, data.train, r.input_on);
  if (data.test) {
    const auto scores = forward(r.model, data.test->x, Gating::Hard, r.input_on);
    r.test = auc_report(scores, data.test->y, opt.n_boot, opt.bootstrap_seed);
  }
}

inline std::vector<std::size_t> iota_columns(std::size_t n) {
  std::vector<std::size_t> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = i;
  return c;
}

}  // namespace detail

// All features, input mask frozen open.
inline StageResult run_full_stage(const StageData& data, TrainConfig cfg, const StageOptions& opt) {
  StageResult r;
  r.stage = "full";
  r.selected = detail::iota_columns(data.train.x.cols());
  cfg.lambda_mask = 0.0;
  cfg.learn_input_mask = false;
  auto trained = train(detail::fresh_model(data, r.selected, opt.model_seed), {data.train.x, data.train.y}, cfg,
                       data.refresh);
  r.model = std::move(trained.model);
  r.history = std::move(trained.history);
  detail::finish_stage(r, data, opt);
  return r;
}

// L0-penalised input mask; the selection is the smoothed mask >= 0.5 and
// the stage is evaluated with exactly those inputs on.
inline StageResult run_binmask_stage(const StageData& data, const TrainConfig& cfg, const StageOptions& opt) {
  StageResult r;
  r.stage = "binmask";
  auto trained = train(detail::fresh_model(data, detail::iota_columns(data.train.x.cols()), opt.model_seed),
                       {data.train.x, data.train.y}, cfg, data.refresh);
  r.model = std::move(trained.model);
  r.history = std::move(trained.history);
  r.selected = binmask_select(r.model);
  r.input_on = selection_mask(r.model.input_dim(), r.selected);
  detail::finish_stage(r, data, opt);
  return r;
}

// ---------------------------------------------------------------------------
// Iterative removal.

enum class StopBaseline { Stage, Iteration };

inline const char* to_string(StopBaseline b) { return b == StopBaseline::Stage ? "stage" : "iteration"; }

inline StopBaseline stop_baseline_from(const std::string& s) {
  if (s == "stage") return StopBaseline::Stage;
  if (s == "iteration") return StopBaseline::Iteration;
  throw ValidationError("stop baseline must be 'stage' or 'iteration'");
}

struct RemovalOptions {
  double stop_delta = 0.006;
  StopBaseline baseline = StopBaseline::Stage;
  std::size_t threads = 1;
};

struct RemovalStep {
  std::size_t feature = 0;  // model input index
  double auc = 0.0;         // training AUC after the removal
  bool accepted = true;     // false for the reverted removal that crossed the threshold
};

struct RemovalTrace {
  double baseline = 0.0;
  double stop_delta = 0.006;
  StopBaseline mode = StopBaseline::Stage;
  std::vector<RemovalStep> steps;
  std::string stop_reason;  // "threshold" or "single_feature"
};

struct RemovalResult {
  std::vector<std::size_t> kept;  // model input indices, ascending
  RemovalTrace trace;
  double final_auc = 0.0;
};

namespace detail {

// Scores with `feature` additionally switched off: only rows where the
// feature is nonzero change, and those are recomputed without it.
inline std::vector<double> scores_without(const FoldedMlp& f, const SparseMatrix& x,
                                          const std::vector<std::size_t>& rows_with, std::size_t feature,
                                          const std::vector<double>& current, Activations& act, SparseRow& buf) {
  std::vector<double> s = current;
  for (std::size_t r : rows_with) {
    buf.clear();
    for (const auto& e : x.row(r))
      if (e.col != feature) buf.push_back(e);
    s[r] = forward_row(f, buf, act);
  }
  return s;
}

}  // namespace detail

// Greedy removal of the feature whose zeroing costs the least training AUC.
// Candidates never mutate the model; the argmin is taken over candidates
// in ascending index order so ties go to the lowest index.
inline RemovalResult iterative_removal(const MlpModel& model, const SparseMatrix& x, std::span<const int> labels,
                                       std::span<const std::size_t> selected, const RemovalOptions& opt = {}) {
  if (selected.empty()) throw ValidationError("iterative removal: empty selection");
  if (!(opt.stop_delta >= 0.0)) throw ValidationError("iterative removal: stop delta must be non-negative");
  check_columns(model, x.cols());
  std::vector<std::uint8_t> on = selection_mask(model.input_dim(), selected);
  FoldedMlp f = fold(model, Gating::Hard, on);

  std::vector<std::vector<std::size_t>> rows_with(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& e : x.row(r)) rows_with[e.col].push_back(r);

  std::vector<double> current(x.rows());
  {
    Activations act;
    for (std::size_t r = 0; r < x.rows(); ++r) current[r] = forward_row(f, x.row(r), act);
  }
  RemovalResult out;
  out.trace.baseline = auc(current, labels);
  out.trace.stop_delta = opt.stop_delta;
  out.trace.mode = opt.baseline;
  double current_auc = out.trace.baseline;

  const std::size_t threads = std::max<std::size_t>(1, opt.threads);
  while (true) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < on.size(); ++i)
      if (on[i]) candidates.push_back(i);
    if (candidates.size() <= 1) {
      out.trace.stop_reason = "single_feature";
      break;
    }
    std::vector<double> cand_auc(candidates.size());
    auto work = [&](std::size_t t) {
      Activations act;
      SparseRow buf;
      for (std::size_t k = t; k < candidates.size(); k += threads) {
        const auto s = detail::scores_without(f, x, rows_with[candidates[k]], candidates[k], current, act, buf);
        cand_auc[k] = auc(s, labels);
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
      for (auto& th : pool) th.join();
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < candidates.size(); ++k)
      if (cand_auc[k] > cand_auc[best]) best = k;
    const std::size_t feature = candidates[best];
    const double after = cand_auc[best];
    const double reference = opt.baseline == StopBaseline::Stage ? out.trace.baseline : current_auc;
    if (after < reference - opt.stop_delta) {
      out.trace.steps.push_back({feature, after, false});
      out.trace.stop_reason = "threshold";
      break;
    }
    out.trace.steps.push_back({feature, after, true});
    Activations act;
    SparseRow buf;
    current = detail::scores_without(f, x, rows_with[feature], feature, current, act, buf);
    on[feature] = 0;
    for (std::size_t j = 0; j < f.h1; ++j) f.first[feature * f.h1 + j] = 0.0;
    f.input_gate[feature] = 0.0;
    current_auc = after;
  }
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) out.kept.push_back(i);
  out.final_auc = current_auc;
  return out;
}

inline StageResult run_reduce_stage(const StageResult& binmask, const StageData& data, const RemovalOptions& ropt,
                                    const StageOptions& opt, RemovalTrace* trace_out = nullptr) {
  auto removal = iterative_removal(binmask.model, data.train.x, data.train.y, binmask.selected, ropt);
  StageResult r;
  r.stage = "reduced";
  r.model = binmask.model;
  r.selected = removal.kept;
  r.input_on = selection_mask(r.model.input_dim(), r.selected);
  detail::finish_stage(r, data, opt);
  if (trace_out) *trace_out = std::move(removal.trace);
  return r;
}

// Fresh initialisation on the selected columns only; the other columns are
// absent from the model.
inline StageResult retrain_final(const StageData& data, std::span<const std::size_t> selected, TrainConfig cfg,
                                 const StageOptions& opt) {
  if (selected.empty()) throw ValidationError("retrain: empty selection");
  const std::vector<std::size_t> cols(selected.begin(), selected.end());
  for (std::size_t c : cols)
    if (c >= data.train.x.cols()) throw ValidationError("retrain: selected column out of range");
  StageData projected;
  projected.train = {data.train.x.project(cols), data.train.y};
  if (data.test) projected.test = LabeledMatrix{data.test->x.project(cols), data.test->y};
  for (std::size_t c : cols) projected.names.push_back(c < data.names.size() ? data.names[c] : "f" + std::to_string(c));
  if (data.refresh) {
    projected.refresh = [refresh = data.refresh, cols](std::span<const std::size_t> rows, std::uint64_t seed) {
      return refresh(rows, seed).project(cols);
    };
  }
  cfg.lambda_mask = 0.0;
  cfg.learn_input_mask = false;
  StageResult r;
  r.stage = "final";
  r.selected = cols;
  auto trained = train(detail::fresh_model(projected, cols, opt.model_seed), {projected.train.x, projected.train.y},
                       cfg, projected.refresh);
  r.model = std::move(trained.model);
  r.history = std::move(trained.history);
  detail::finish_stage(r, projected, opt);
  return r;
}

}  // namespace soundexpl
