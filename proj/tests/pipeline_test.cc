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

#include "soundexpl/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "soundexpl/experiment.hpp"
#include "soundexpl/ranking.hpp"

namespace soundexpl {
namespace {

// Label depends on the first `informative` columns; the rest is noise.
LabeledMatrix synthetic(std::size_t rows, std::size_t cols, std::size_t informative, std::uint64_t seed) {
  Rng rng(seed);
  LabeledMatrix d{SparseMatrix(cols), {}};
  for (std::size_t r = 0; r < rows; ++r) {
    SparseRow row;
    double signal = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = rng.normal();
      if (c < informative) signal += (c % 2 == 0 ? 1.5 : -1.0) * v;
      row.push_back({c, v});
    }
    d.x.append_row(row);
    d.y.push_back(signal + 0.5 * rng.normal() > 0.0 ? 1 : 0);
  }
  return d;
}

MlpModel small_model(std::size_t inputs, std::uint64_t seed) {
  MlpConfig cfg;
  cfg.input_dim = inputs;
  cfg.hidden1 = 8;
  cfg.hidden2 = 4;
  cfg.seed = seed;
  return init_mlp(cfg);
}

TrainConfig quick_train(std::uint64_t seed, std::size_t epochs = 15) {
  TrainConfig t;
  t.lr = 1e-2;
  t.batch_size = 32;
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

MlpModel trained_small(const LabeledMatrix& d, std::uint64_t seed) {
  TrainConfig t = quick_train(seed);
  t.lambda_mask = 0.0;
  t.learn_input_mask = false;
  return train(small_model(d.x.cols(), seed), {d.x, d.y}, t).model;
}

TEST(SplitTest, StratifiedDisjointAndDeterministic) {
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back(i % 5 == 0 ? 1 : 0);
  const Split a = stratified_split(labels, {0.2, 3});
  const Split b = stratified_split(labels, {0.2, 3});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.size() + a.test.size(), 1000u);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (std::size_t i : a.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 1000u);
  std::size_t test_pos = 0;
  for (std::size_t i : a.test) test_pos += labels[i];
  EXPECT_EQ(test_pos, 40u);
  EXPECT_EQ(a.test.size(), 200u);
  EXPECT_NE(stratified_split(labels, {0.2, 4}).test, a.test);
}

TEST(SplitTest, SingleClassSideIsAnError) {
  std::vector<int> labels(50, 0);
  labels[0] = 1;
  EXPECT_THROW(stratified_split(labels, {0.2, 1}), SingleClassError);
  EXPECT_THROW(stratified_split(labels, {1.5, 1}), ValidationError);
}

TEST(RemovalTest, NoiseFeatureRemovedFirstPerExhaustiveOracle) {
  const auto d = synthetic(600, 3, 2, 1);
  const MlpModel m = trained_small(d, 2);
  const std::vector<std::size_t> all{0, 1, 2};
  // Oracle: full forward pass with each candidate gated off.
  std::size_t oracle = 0;
  double best = -1.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::uint8_t> on{1, 1, 1};
    on[c] = 0;
    const double a = model_auc(m, d, on);
    if (a > best) {
      best = a;
      oracle = c;
    }
  }
  EXPECT_EQ(oracle, 2u);
  const auto r = iterative_removal(m, d.x, d.y, all, {1.0, StopBaseline::Stage, 1});
  ASSERT_FALSE(r.trace.steps.empty());
  EXPECT_EQ(r.trace.steps[0].feature, 2u);
  EXPECT_EQ(r.trace.steps[0].auc, best);
}

TEST(RemovalTest, TraceMatchesGatedForwardPass) {
  const auto d = synthetic(400, 8, 3, 3);
  const MlpModel m = trained_small(d, 4);
  std::vector<std::size_t> sel{0, 1, 2, 3, 4, 5, 6, 7};
  const auto r = iterative_removal(m, d.x, d.y, sel, {1.0, StopBaseline::Stage, 1});
  std::vector<std::uint8_t> on(8, 1);
  EXPECT_EQ(r.trace.baseline, model_auc(m, d, on));
  for (const auto& s : r.trace.steps) {
    on[s.feature] = 0;
    EXPECT_NEAR(s.auc, model_auc(m, d, on), 1e-12);
  }
}

TEST(RemovalTest, DegenerateThresholdRemovesDownToOne) {
  const auto d = synthetic(300, 6, 2, 5);
  const MlpModel m = trained_small(d, 6);
  const auto r = iterative_removal(m, d.x, d.y, std::vector<std::size_t>{0, 1, 2, 3, 4, 5}, {1.0});
  EXPECT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.trace.steps.size(), 5u);
  EXPECT_EQ(r.trace.stop_reason, "single_feature");
  for (const auto& s : r.trace.steps) {
    EXPECT_TRUE(s.accepted);
    EXPECT_GE(s.auc, 0.0);
    EXPECT_LE(s.auc, 1.0);
  }
}

TEST(RemovalTest, ZeroDeltaKeepsMaximalPrefixAtOrAboveBaseline) {
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    const auto d = synthetic(300, 6, 2, seed);
    const MlpModel m = trained_small(d, seed);
    const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
    const auto r = iterative_removal(m, d.x, d.y, all, {0.0});
    // Replay the unbounded trace against the rule.
    const auto full = iterative_removal(m, d.x, d.y, all, {1.0});
    std::size_t prefix = 0;
    while (prefix < full.trace.steps.size() && full.trace.steps[prefix].auc >= full.trace.baseline) ++prefix;
    EXPECT_EQ(6 - r.kept.size(), prefix);
    for (std::size_t k = 0; k < prefix; ++k) EXPECT_EQ(r.trace.steps[k].feature, full.trace.steps[k].feature);
    if (prefix < 5) {
      ASSERT_EQ(r.trace.steps.size(), prefix + 1);
      EXPECT_FALSE(r.trace.steps.back().accepted);
      EXPECT_LT(r.trace.steps.back().auc, r.trace.baseline);
    }
  }
}

TEST(RemovalTest, StopRuleSoundness) {
  const auto d = synthetic(500, 10, 3, 20);
  const MlpModel m = trained_small(d, 21);
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  for (double delta : {0.002, 0.006, 0.02}) {
    const auto r = iterative_removal(m, d.x, d.y, all, {delta});
    const double kept_auc = model_auc(m, d, selection_mask(10, r.kept));
    EXPECT_GE(kept_auc, r.trace.baseline - delta);
    EXPECT_EQ(kept_auc, r.final_auc);
    if (r.trace.stop_reason == "threshold") {
      EXPECT_FALSE(r.trace.steps.back().accepted);
      EXPECT_LT(r.trace.steps.back().auc, r.trace.baseline - delta);
    }
  }
}

TEST(RemovalTest, IterationBaselineComparesAgainstPreviousStep) {
  const auto d = synthetic(500, 10, 3, 22);
  const MlpModel m = trained_small(d, 23);
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  const auto r = iterative_removal(m, d.x, d.y, all, {0.004, StopBaseline::Iteration});
  double previous = r.trace.baseline;
  for (const auto& s : r.trace.steps) {
    EXPECT_EQ(s.accepted, !(s.auc < previous - 0.004));
    previous = s.auc;
  }
}

TEST(RemovalTest, ThreadCountDoesNotChangeResult) {
  const auto d = synthetic(400, 12, 3, 30);
  const MlpModel m = trained_small(d, 31);
  std::vector<std::size_t> sel{0, 2, 3, 5, 6, 7, 9, 11};
  const auto a = iterative_removal(m, d.x, d.y, sel, {0.01, StopBaseline::Stage, 1});
  const auto b = iterative_removal(m, d.x, d.y, sel, {0.01, StopBaseline::Stage, 3});
  EXPECT_EQ(a.kept, b.kept);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (std::size_t k = 0; k < a.trace.steps.size(); ++k) {
    EXPECT_EQ(a.trace.steps[k].feature, b.trace.steps[k].feature);
    EXPECT_EQ(a.trace.steps[k].auc, b.trace.steps[k].auc);
  }
}

TEST(RemovalTest, CandidatesDoNotMutateModelAndNestInSelection) {
  const auto d = synthetic(300, 8, 2, 40);
  const MlpModel m = trained_small(d, 41);
  const auto before = model_to_json(m).dump();
  std::vector<std::size_t> sel{1, 3, 4, 6};
  const auto r = iterative_removal(m, d.x, d.y, sel, {0.006});
  EXPECT_EQ(model_to_json(m).dump(), before);
  for (std::size_t k : r.kept) EXPECT_TRUE(std::find(sel.begin(), sel.end(), k) != sel.end());
  EXPECT_THROW(iterative_removal(m, d.x, d.y, std::vector<std::size_t>{}, {}), ValidationError);
}

TEST(RemovalTest, ZeroingEquivalence) {
  const auto d = synthetic(200, 6, 2, 50);
  const MlpModel m = trained_small(d, 51);
  for (std::size_t c = 0; c < 6; ++c) {
    SparseMatrix zeroed(6);
    for (std::size_t r = 0; r < d.x.rows(); ++r) {
      SparseRow row;
      for (const auto& e : d.x.row(r))
        if (e.col != c) row.push_back(e);
      zeroed.append_row(row);
    }
    std::vector<std::uint8_t> on(6, 1);
    on[c] = 0;
    const auto a = forward(m, zeroed, Gating::Hard);
    const auto b = forward(m, d.x, Gating::Hard, on);
    for (std::size_t r = 0; r < a.size(); ++r) EXPECT_NEAR(a[r], b[r], 1e-12);
  }
}

StageData stage_data(std::uint64_t seed) {
  StageData s;
  s.train = synthetic(500, 10, 3, seed);
  s.test = synthetic(200, 10, 3, seed + 1);
  for (std::size_t i = 0; i < 10; ++i) s.names.push_back("c" + std::to_string(i));
  return s;
}

TEST(StageTest, FullStageKeepsEveryFeature) {
  const auto data = stage_data(60);
  const auto r = run_full_stage(data, quick_train(1, 5), {200, 2, 3});
  EXPECT_EQ(r.selected.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(r.model.input_mask.on(i));
  ASSERT_TRUE(r.test.has_value());
  EXPECT_GT(r.test->auc, 0.8);
  EXPECT_EQ(r.model.feature_names[3], "c3");
}

TEST(StageTest, NoPenaltyKeepsGatesOpen) {
  const auto data = stage_data(61);
  TrainConfig t = quick_train(1, 5);
  t.lambda_mask = 0.0;
  const auto r = run_binmask_stage(data, t, {200, 2, 3});
  EXPECT_GE(r.selected.size(), 9u);
}

TEST(StageTest, PenaltyDropsNoiseAndStagesNest) {
  const auto data = stage_data(62);
  TrainConfig t = quick_train(1, 40);
  t.lambda_mask = 2e-2;
  t.gate_lr = 5e-2;
  const auto bin = run_binmask_stage(data, t, {200, 2, 3});
  EXPECT_LT(bin.selected.size(), 10u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_TRUE(std::find(bin.selected.begin(), bin.selected.end(), i) != bin.selected.end()) << i;
  RemovalTrace trace;
  const auto red = run_reduce_stage(bin, data, {0.006}, {200, 0, 3}, &trace);
  const auto fin = retrain_final(data, red.selected, t, {200, 4, 3});
  const std::set<std::size_t> b(bin.selected.begin(), bin.selected.end());
  for (std::size_t c : red.selected) EXPECT_TRUE(b.count(c));
  EXPECT_EQ(fin.selected, red.selected);
  EXPECT_EQ(fin.model.input_dim(), red.selected.size());
  EXPECT_EQ(fin.model.feature_columns, red.selected);
  EXPECT_EQ(red.train_auc, model_auc(bin.model, data.train, selection_mask(10, red.selected)));
  EXPECT_GE(red.train_auc, trace.baseline - 0.006);
  EXPECT_EQ(trace.baseline, bin.train_auc);
}

TEST(StageTest, RetrainDeterministicAndAllColumnsMatchesFull) {
  const auto data = stage_data(63);
  const TrainConfig t = quick_train(5, 5);
  const auto full = run_full_stage(data, t, {200, 9, 3});
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  const auto a = retrain_final(data, all, t, {200, 9, 3});
  const auto b = retrain_final(data, all, t, {200, 9, 3});
  EXPECT_EQ(model_to_json(a.model).dump(), model_to_json(b.model).dump());
  EXPECT_EQ(a.test->auc, full.test->auc);
  const auto c = retrain_final(data, std::vector<std::size_t>{0, 2}, t, {200, 9, 3});
  EXPECT_EQ(c.model.input_dim(), 2u);
  EXPECT_EQ(c.model.feature_names, (std::vector<std::string>{"c0", "c2"}));
  EXPECT_THROW(retrain_final(data, std::vector<std::size_t>{}, t, {}), ValidationError);
  EXPECT_THROW(retrain_final(data, std::vector<std::size_t>{10}, t, {}), ValidationError);
}

TEST(StageTest, RefreshIsProjectedForRetraining) {
  auto data = stage_data(64);
  std::size_t calls = 0;
  const SparseMatrix source = data.train.x;
  data.refresh = [&](std::span<const std::size_t> rows, std::uint64_t) {
    ++calls;
    return source.select_rows(rows);
  };
  const TrainConfig t = quick_train(5, 2);
  const auto with = retrain_final(data, std::vector<std::size_t>{1, 4}, t, {200, 9, 3});
  EXPECT_GT(calls, 0u);
  data.refresh = {};
  const auto without = retrain_final(data, std::vector<std::size_t>{1, 4}, t, {200, 9, 3});
  EXPECT_EQ(model_to_json(with.model).dump(), model_to_json(without.model).dump());
}

// --- ranking ---------------------------------------------------------------

TEST(RankingTest, AllZeroColumnScoresOneHalf) {
  auto d = synthetic(200, 4, 2, 70);
  SparseMatrix x(5);
  for (std::size_t r = 0; r < d.x.rows(); ++r) x.append_row(d.x.row(r));
  MlpModel m = trained_small({x, d.y}, 71);
  const auto ranking = univariate_model_auc(m, x, d.y);
  for (const auto& e : ranking.entries)
    if (e.column == 4) {
      EXPECT_EQ(e.auc, 0.5);
    }
}

TEST(RankingTest, MatchesExplicitZeroingAndSorts) {
  const auto d = synthetic(300, 5, 1, 72);
  const MlpModel m = trained_small(d, 73);
  const auto ranking = univariate_model_auc(m, d.x, d.y);
  ASSERT_EQ(ranking.entries.size(), 5u);
  EXPECT_EQ(ranking.entries.front().column, 0u);
  for (const auto& e : ranking.entries) {
    const auto only = d.x.project(std::vector<std::size_t>{e.column});
    SparseMatrix wide(5);
    for (std::size_t r = 0; r < only.rows(); ++r) {
      SparseRow row;
      for (const auto& x : only.row(r)) row.push_back({e.column, x.value});
      wide.append_row(row);
    }
    EXPECT_EQ(e.auc, auc(forward(m, wide, Gating::Hard), d.y));
    EXPECT_EQ(e.name, "f" + std::to_string(e.column));
  }
  for (std::size_t k = 1; k < 5; ++k) {
    const auto& a = ranking.entries[k - 1];
    const auto& b = ranking.entries[k];
    EXPECT_TRUE(a.auc > b.auc || (a.auc == b.auc && a.name < b.name));
  }
}

TEST(RankingTest, GatedOffFeatureScoresOneHalf) {
  const auto d = synthetic(300, 4, 2, 74);
  MlpModel m = trained_small(d, 75);
  m.input_mask.theta[1] = -1.0;
  for (const auto& e : univariate_model_auc(m, d.x, d.y).entries)
    if (e.column == 1) {
      EXPECT_EQ(e.auc, 0.5);
    }
}

TEST(RankingTest, CsvAndSvg) {
  FeatureRanking r{{{"b", 1, 0.75}, {"a&b", 0, 0.5}}};
  EXPECT_EQ(ranking_to_csv(r, {{"b", "final"}}), "feature,univariate_auc,stage_selected\nb,0.75,final\na&b,0.5,\n");
  const auto svg = ranking_to_svg(r);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("a&amp;b"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

// --- experiment ------------------------------------------------------------

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.cohort.n_positive = 150;
  c.cohort.n_negative = 450;
  c.train.epochs = 4;
  c.train.batch_size = 64;
  c.n_boot = 200;
  c.seed = 5;
  return c;
}

TEST(ExperimentTest, RerunIsByteIdentical) {
  const auto a = experiment_files(run_experiment(tiny_experiment()), true);
  const auto b = experiment_files(run_experiment(tiny_experiment()), true);
  EXPECT_EQ(a, b);
  for (const char* f : {"stages.csv", "stage_full.csv", "stage_binmask.csv", "stage_reduced.csv", "stage_final.csv",
                        "removal_trace.csv", "ranking.csv", "ranking.svg", "summary.json", "model_final.json"})
    EXPECT_TRUE(a.count(f)) << f;
}

TEST(ExperimentTest, StagesNestAndSplitIsClean) {
  const auto r = run_experiment(tiny_experiment());
  ASSERT_EQ(r.stages.size(), 4u);
  EXPECT_EQ(r.stages[0].selected.size(), r.feature_names.size());
  for (std::size_t k = 1; k < 4; ++k) {
    const std::set<std::size_t> outer(r.stages[k - 1].selected.begin(), r.stages[k - 1].selected.end());
    for (std::size_t c : r.stages[k].selected) EXPECT_TRUE(outer.count(c));
  }
  EXPECT_EQ(r.train_rows + r.test_rows, r.patients_kept);
  EXPECT_EQ(r.ranking.entries.size(), r.stages[3].selected.size());
  EXPECT_EQ(r.recovery.planted.size(), 10u);
}

TEST(ExperimentTest, ConfigJsonRoundTrip) {
  ExperimentConfig c = tiny_experiment();
  c.removal.baseline = StopBaseline::Iteration;
  c.train.gate_lr = 0.25;
  ExperimentConfig back;
  merge_experiment_config(experiment_config_to_json(c), back);
  EXPECT_EQ(experiment_config_to_json(back), experiment_config_to_json(c));
  EXPECT_THROW(merge_experiment_config(nlohmann::json{{"train", {{"nope", 1}}}}, back), ValidationError);
}

}  // namespace
}  // namespace soundexpl
