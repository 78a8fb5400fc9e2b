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

// End-to-end experiment on a synthetic cohort and its report files.

#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "soundexpl/pipeline.hpp"
#include "soundexpl/ranking.hpp"
#include "soundexpl/synthehr.hpp"

namespace soundexpl {

struct ExperimentConfig {
  CohortConfig cohort;
  TrainConfig train;
  SplitConfig split;
  RemovalOptions removal;
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
};

// Every stream is derived from the master seed.
struct ExperimentSeeds {
  std::uint64_t cohort, split, test_cutoffs, train_cutoffs, full_model, binmask_model, final_model, training,
      bootstrap;

  static ExperimentSeeds derive(std::uint64_t master) {
    return {Rng::mix(master, 1), Rng::mix(master, 2), Rng::mix(master, 3), Rng::mix(master, 4), Rng::mix(master, 5),
            Rng::mix(master, 6), Rng::mix(master, 7), Rng::mix(master, 8), Rng::mix(master, 9)};
  }
};

struct PlantedRecovery {
  std::vector<std::string> planted;
  std::vector<std::string> recovered_binmask;
  std::vector<std::string> recovered_reduced;
  std::vector<std::string> recovered_final;
};

struct ExperimentReport {
  ExperimentConfig config;
  ExperimentSeeds seeds{};
  std::size_t patients_generated = 0;
  std::size_t patients_kept = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double train_sparsity = 0.0;
  std::vector<std::string> feature_names;
  std::vector<StageResult> stages;  // full, binmask, reduced, final
  RemovalTrace trace;
  FeatureRanking ranking;
  PlantedRecovery recovery;

  const StageResult& stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.stage == name) return s;
    throw ValidationError("no stage named " + name);
  }
};

// Codes (as "kind:code") that have at least one selected column.
inline std::vector<std::string> recovered_codes(const FeatureSpec& spec, std::span<const std::size_t> selected,
                                                const std::vector<PlantedCode>& planted) {
  std::set<std::size_t> sel(selected.begin(), selected.end());
  std::vector<std::string> out;
  for (const auto& p : planted)
    for (std::size_t c : spec.columns_of(p.code))
      if (sel.count(c)) {
        out.push_back(p.code.name());
        break;
      }
  return out;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.config = cfg;
  rep.seeds = ExperimentSeeds::derive(cfg.seed);
  CohortConfig cc = cfg.cohort;
  cc.seed = rep.seeds.cohort;
  const Cohort raw = generate_cohort(cc);
  rep.patients_generated = raw.patients.size();
  auto cohort = std::make_shared<const Cohort>(quality_filter(raw));
  rep.patients_kept = cohort->patients.size();

  SplitConfig sc = cfg.split;
  sc.seed = rep.seeds.split;
  const Split split = stratified_split(cohort->labels, sc);
  rep.train_rows = split.train.size();
  rep.test_rows = split.test.size();

  // Vocabulary and cutoff distribution come from the training side only.
  auto spec = std::make_shared<const FeatureSpec>(filter_codes(*cohort, split.train));
  auto sampler = std::make_shared<const CutoffSampler>(CutoffSampler::from_cohort(*cohort, split.train));
  rep.feature_names = spec->names();

  auto fixed_matrix = [&](const std::vector<std::size_t>& idx, std::uint64_t seed) {
    Rng rng(seed);
    LabeledMatrix m{SparseMatrix(spec->size()), {}};
    for (std::size_t i : idx) {
      const int cut = sampler->sample(cohort->patients[i], cohort->labels[i], cohort->diagnosis_day[i], rng);
      m.x.append_row(derive_features(cohort->patients[i], cut, *spec));
      m.y.push_back(cohort->labels[i]);
    }
    return m;
  };
  StageData data;
  data.train = fixed_matrix(split.train, rep.seeds.train_cutoffs);
  data.test = fixed_matrix(split.test, rep.seeds.test_cutoffs);
  data.names = rep.feature_names;
  rep.train_sparsity = 1.0 - data.train.x.density();
  if (cfg.train.resample_cutoffs) {
    data.refresh = [cohort, spec, sampler, train_idx = split.train](std::span<const std::size_t> rows,
                                                                     std::uint64_t batch_seed) {
      Rng rng(batch_seed);
      SparseMatrix batch(spec->size());
      for (std::size_t r : rows) {
        const std::size_t i = train_idx[r];
        const int cut = sampler->sample(cohort->patients[i], cohort->labels[i], cohort->diagnosis_day[i], rng);
        batch.append_row(derive_features(cohort->patients[i], cut, *spec));
      }
      return batch;
    };
  }

  TrainConfig tc = cfg.train;
  tc.seed = rep.seeds.training;
  auto opts = [&](std::uint64_t model_seed) { return StageOptions{cfg.n_boot, model_seed, rep.seeds.bootstrap}; };
  rep.stages.push_back(run_full_stage(data, tc, opts(rep.seeds.full_model)));
  rep.stages.push_back(run_binmask_stage(data, tc, opts(rep.seeds.binmask_model)));
  rep.stages.push_back(run_reduce_stage(rep.stages[1], data, cfg.removal, opts(0), &rep.trace));
  rep.stages.push_back(retrain_final(data, rep.stages[2].selected, tc, opts(rep.seeds.final_model)));

  const auto& final_stage = rep.stages[3];
  rep.ranking = univariate_model_auc(final_stage.model, data.test->x.project(final_stage.selected), data.test->y);

  for (const auto& p : cohort->ground_truth) rep.recovery.planted.push_back(p.code.name());
  rep.recovery.recovered_binmask = recovered_codes(*spec, rep.stages[1].selected, cohort->ground_truth);
  rep.recovery.recovered_reduced = recovered_codes(*spec, rep.stages[2].selected, cohort->ground_truth);
  rep.recovery.recovered_final = recovered_codes(*spec, rep.stages[3].selected, cohort->ground_truth);
  return rep;
}

// ---------------------------------------------------------------------------
// Config JSON.

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"gate_lr", t.gate_lr},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"lambda_mask", t.lambda_mask},
          {"lambda_weight", t.lambda_weight},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"resample_cutoffs", t.resample_cutoffs}};
}

inline void merge_train_config(const nlohmann::json& j, TrainConfig& t) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr") t.lr = value.get<double>();
      else if (key == "gate_lr") t.gate_lr = value.get<double>();
      else if (key == "batch_size") t.batch_size = value.get<std::size_t>();
      else if (key == "epochs") t.epochs = value.get<std::size_t>();
      else if (key == "lambda_mask") t.lambda_mask = value.get<double>();
      else if (key == "lambda_weight") t.lambda_weight = value.get<double>();
      else if (key == "beta1") t.beta1 = value.get<double>();
      else if (key == "beta2") t.beta2 = value.get<double>();
      else if (key == "epsilon") t.epsilon = value.get<double>();
      else if (key == "resample_cutoffs") t.resample_cutoffs = value.get<bool>();
      else throw ValidationError("unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"cohort", cohort_config_to_json(c.cohort)},
          {"train", train_config_to_json(c.train)},
          {"split", {{"test_fraction", c.split.test_fraction}}},
          {"removal", {{"stop_delta", c.removal.stop_delta}, {"stop_baseline", to_string(c.removal.baseline)}}},
          {"n_boot", c.n_boot},
          {"seed", c.seed}};
}

inline void merge_experiment_config(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "cohort") merge_cohort_config(value, c.cohort);
      else if (key == "train") merge_train_config(value, c.train);
      else if (key == "split") c.split.test_fraction = value.at("test_fraction").get<double>();
      else if (key == "removal") {
        if (value.contains("stop_delta")) c.removal.stop_delta = value.at("stop_delta").get<double>();
        if (value.contains("stop_baseline"))
          c.removal.baseline = stop_baseline_from(value.at("stop_baseline").get<std::string>());
      } else if (key == "n_boot") c.n_boot = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ValidationError("unknown experiment config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Report files: name -> contents, all byte-stable for fixed seeds.

inline std::string stages_csv(const std::vector<StageResult>& stages) {
  std::string out = "stage,n_features,train_auc,test_auc,test_ci_low,test_ci_high\n";
  for (const auto& s : stages) {
    out += s.stage + "," + std::to_string(s.selected.size()) + "," + format_double(s.train_auc);
    if (s.test)
      out += "," + format_double(s.test->auc) + "," + format_double(s.test->ci_low) + "," +
             format_double(s.test->ci_high);
    else
      out += ",,,";
    out += "\n";
  }
  return out;
}

inline std::string stage_features_csv(const StageResult& s, const std::vector<std::string>& names) {
  std::string out = "column,feature\n";
  for (std::size_t c : s.selected) out += std::to_string(c) + "," + (c < names.size() ? names[c] : "") + "\n";
  return out;
}

inline std::string trace_csv(const RemovalTrace& t, const std::vector<std::string>& names) {
  std::string out = "step,feature,train_auc,accepted\n";
  out += "0,," + format_double(t.baseline) + ",baseline\n";
  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    const auto& s = t.steps[k];
    out += std::to_string(k + 1) + "," + (s.feature < names.size() ? names[s.feature] : std::to_string(s.feature)) +
           "," + format_double(s.auc) + "," + (s.accepted ? "1" : "0") + "\n";
  }
  return out;
}

inline nlohmann::json trace_to_json(const RemovalTrace& t) {
  auto steps = nlohmann::json::array();
  for (const auto& s : t.steps) steps.push_back({{"feature", s.feature}, {"auc", s.auc}, {"accepted", s.accepted}});
  return {{"baseline", t.baseline},
          {"stop_delta", t.stop_delta},
          {"stop_baseline", to_string(t.mode)},
          {"stop_reason", t.stop_reason},
          {"steps", steps}};
}

inline nlohmann::json stage_summary_json(const StageResult& s) {
  nlohmann::json j{{"stage", s.stage}, {"n_features", s.selected.size()}, {"train_auc", s.train_auc}};
  if (s.test) {
    j["test_auc"] = s.test->auc;
    j["test_ci"] = {s.test->ci_low, s.test->ci_high};
    j["n_pos"] = s.test->n_pos;
    j["n_neg"] = s.test->n_neg;
  }
  return j;
}

inline nlohmann::json experiment_summary(const ExperimentReport& r) {
  auto stages = nlohmann::json::array();
  for (const auto& s : r.stages) stages.push_back(stage_summary_json(s));
  return {{"patients_generated", r.patients_generated},
          {"patients_kept", r.patients_kept},
          {"train_rows", r.train_rows},
          {"test_rows", r.test_rows},
          {"n_features", r.feature_names.size()},
          {"train_sparsity", r.train_sparsity},
          {"stages", stages},
          {"removal", {{"baseline", r.trace.baseline},
                       {"steps", r.trace.steps.size()},
                       {"stop_reason", r.trace.stop_reason}}},
          {"planted", r.recovery.planted},
          {"recovered_binmask", r.recovery.recovered_binmask},
          {"recovered_reduced", r.recovery.recovered_reduced},
          {"recovered_final", r.recovery.recovered_final}};
}

inline std::map<std::string, std::string> experiment_files(const ExperimentReport& r, bool svg) {
  std::map<std::string, std::string> files;
  files["stages.csv"] = stages_csv(r.stages);
  for (const auto& s : r.stages) files["stage_" + s.stage + ".csv"] = stage_features_csv(s, r.feature_names);
  files["removal_trace.csv"] = trace_csv(r.trace, r.feature_names);
  std::map<std::string, std::string> stage_of;
  for (const auto& s : r.stages)
    for (std::size_t c : s.selected) stage_of[r.feature_names[c]] = s.stage;
  files["ranking.csv"] = ranking_to_csv(r.ranking, stage_of);
  if (svg) files["ranking.svg"] = ranking_to_svg(r.ranking);
  files["summary.json"] = experiment_summary(r).dump(2) + "\n";
  files["model_final.json"] = model_to_json(r.stage("final").model).dump() + "\n";
  return files;
}

}  // namespace soundexpl
