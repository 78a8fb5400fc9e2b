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

// soundexpl command-line tool.
//
// stdout carries machine-readable results (JSON, CSV or key=value lines);
// diagnostics go to stderr. Exit codes: 0 success, 1 validation or usage
// error, 2 I/O error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "soundexpl/attribution.hpp"
#include "soundexpl/compgraph.hpp"
#include "soundexpl/error.hpp"
#include "soundexpl/experiment.hpp"
#include "soundexpl/manifest.hpp"
#include "soundexpl/neural.hpp"
#include "soundexpl/pipeline.hpp"
#include "soundexpl/ranking.hpp"
#include "soundexpl/sparse.hpp"
#include "soundexpl/synthehr.hpp"

namespace sx = soundexpl;
using nlohmann::json;

namespace {

struct TrainFlags {
  std::optional<double> lr, gate_lr, lambda_mask, lambda_weight;
  std::optional<std::size_t> epochs, batch_size;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--lr", lr, "learning rate for weights and biases");
    app->add_option("--gate-lr", gate_lr, "learning rate for gate parameters");
    app->add_option("--lambda-mask", lambda_mask, "L0 penalty on the input mask");
    app->add_option("--lambda-weight", lambda_weight, "L0 penalty on weight gates");
    app->add_option("--batch-size", batch_size, "minibatch size");
  }
  void apply(sx::TrainConfig& t) const {
    if (lr) t.lr = *lr;
    if (gate_lr) t.gate_lr = *gate_lr;
    if (lambda_mask) t.lambda_mask = *lambda_mask;
    if (lambda_weight) t.lambda_weight = *lambda_weight;
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
  }
};

struct Options {
  std::string config, data, test, model, selection, graph, input, out, out_cohort, out_matrix, out_selection,
      out_trace, out_test_matrix, out_dir, svg, manifest, stop_baseline = "stage", stage = "final";
  std::uint64_t seed = 0;
  std::size_t threads = 1, pairs = 10, steps = sx::kDefaultSteps, sweep_steps = 4096, models = 20;
  std::optional<std::size_t> n_boot;
  std::optional<double> stop_delta;
  double test_fraction = 0.2;
  bool print_config = false, with_svg = false;
  TrainFlags train;
  CLI::Option* seed_option = nullptr;
};

// --- file helpers ----------------------------------------------------------

std::string read_recorded(const std::string& path, sx::RunManifest& man) {
  std::string text = sx::read_file(path);
  man.inputs[path] = sx::sha256_hex(text);
  return text;
}

void write_recorded(const std::string& path, const std::string& text, sx::RunManifest& man) {
  sx::write_file(path, text);
  man.outputs[path] = sx::sha256_hex(text);
}

void write_manifest(const std::string& path, const sx::RunManifest& man) {
  sx::write_file(path, man.to_json().dump(2) + "\n");
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw sx::ValidationError(what + ": " + e.what());
  }
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

// A matrix file comes with ".cols" (one name per line) and ".labels" (0/1 per line).
struct MatrixFile {
  sx::LabeledMatrix data;
  std::vector<std::string> names;
};

MatrixFile read_matrix_file(const std::string& path, sx::RunManifest& man) {
  MatrixFile f;
  std::istringstream in(read_recorded(path, man));
  f.data.x = sx::matrix_from_triplets(in);
  f.names = split_lines(read_recorded(path + ".cols", man));
  if (f.names.size() != f.data.x.cols()) throw sx::ValidationError("column names do not match matrix width");
  for (const auto& l : split_lines(read_recorded(path + ".labels", man))) {
    if (l != "0" && l != "1") throw sx::ValidationError("labels must be 0 or 1, got '" + l + "'");
    f.data.y.push_back(l == "1" ? 1 : 0);
  }
  if (f.data.y.size() != f.data.x.rows()) throw sx::ValidationError("label count does not match matrix rows");
  return f;
}

void write_matrix_file(const std::string& path, const sx::SparseMatrix& x, const std::vector<std::string>& names,
                       const std::vector<int>& labels, sx::RunManifest& man) {
  write_recorded(path, sx::matrix_to_triplets(x), man);
  std::string cols, labs;
  for (const auto& n : names) cols += n + "\n";
  for (int y : labels) labs += std::to_string(y) + "\n";
  write_recorded(path + ".cols", cols, man);
  write_recorded(path + ".labels", labs, man);
}

std::string selection_csv(const std::vector<std::size_t>& cols, const std::vector<std::string>& names) {
  std::string out = "column,feature\n";
  for (std::size_t c : cols) out += std::to_string(c) + "," + (c < names.size() ? names[c] : "") + "\n";
  return out;
}

std::vector<std::size_t> read_selection(const std::string& path, sx::RunManifest& man) {
  const auto lines = split_lines(read_recorded(path, man));
  if (lines.empty() || lines[0].rfind("column", 0) != 0) throw sx::ValidationError("selection file needs a header");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto comma = lines[i].find(',');
    try {
      out.push_back(std::stoul(lines[i].substr(0, comma)));
    } catch (const std::exception&) {
      throw sx::ValidationError("bad selection line '" + lines[i] + "'");
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

sx::MlpModel read_model(const std::string& path, sx::RunManifest& man) {
  return sx::model_from_json(parse_json(read_recorded(path, man), "model file"));
}

void require_seed(const Options& o, const std::string& cmd) {
  if (o.seed_option->count() == 0) throw sx::ValidationError("--seed is required for '" + cmd + "'");
}

std::string manifest_path(const Options& o, const std::string& primary) {
  return o.manifest.empty() ? primary + ".manifest.json" : o.manifest;
}

sx::TrainConfig train_config(const Options& o, sx::RunManifest& man) {
  sx::TrainConfig t;
  if (!o.config.empty()) {
    const json j = parse_json(read_recorded(o.config, man), "train config");
    sx::merge_train_config(j.contains("train") ? j.at("train") : j, t);
  }
  o.train.apply(t);
  t.seed = o.seed;
  t.validate();
  return t;
}

json history_json(const std::vector<sx::EpochStats>& h) {
  auto out = json::array();
  for (const auto& e : h) out.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_auc", e.train_auc}});
  return out;
}

sx::MlpModel named_model(const MatrixFile& f, std::uint64_t seed) {
  sx::MlpConfig mc;
  mc.input_dim = f.data.x.cols();
  mc.seed = seed;
  sx::MlpModel m = sx::init_mlp(mc);
  sx::fit_input_scale(m, f.data.x);
  m.feature_names = f.names;
  for (std::size_t i = 0; i < mc.input_dim; ++i) m.feature_columns.push_back(i);
  return m;
}

// --- subcommands -----------------------------------------------------------

int cmd_gen(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "gen";
  sx::CohortConfig cc;
  if (!o.config.empty()) {
    const json j = parse_json(read_recorded(o.config, man), "cohort config");
    sx::merge_cohort_config(j.contains("cohort") ? j.at("cohort") : j, cc);
  }
  if (o.print_config) {
    std::cout << sx::cohort_config_to_json(cc).dump(2) << "\n";
    return 0;
  }
  require_seed(o, "gen");
  if (o.out_cohort.empty() && o.out_matrix.empty())
    throw sx::ValidationError("gen needs --out-cohort and/or --out-matrix");
  cc.seed = o.seed;
  const sx::Cohort raw = sx::generate_cohort(cc);
  const sx::Cohort cohort = sx::quality_filter(raw);
  // With a test matrix requested, vocabulary and cutoff distribution come
  // from the training side of a stratified split.
  std::vector<std::size_t> train_rows, test_rows;
  const auto split_seed = sx::Rng::mix(o.seed, 2);
  if (!o.out_test_matrix.empty()) {
    const auto split = sx::stratified_split(cohort.labels, {o.test_fraction, split_seed});
    train_rows = split.train;
    test_rows = split.test;
  } else {
    for (std::size_t i = 0; i < cohort.patients.size(); ++i) train_rows.push_back(i);
  }
  const sx::FeatureSpec spec(sx::filter_codes(cohort, train_rows));
  const auto sampler = sx::CutoffSampler::from_cohort(cohort, train_rows);
  const auto cutoff_seed = sx::Rng::mix(o.seed, 3);
  sx::Rng rng(cutoff_seed);
  auto matrix_for = [&](const std::vector<std::size_t>& rows, std::vector<int>& labels) {
    sx::SparseMatrix x(spec.size());
    for (std::size_t i : rows) {
      const int cut = sampler.sample(cohort.patients[i], cohort.labels[i], cohort.diagnosis_day[i], rng);
      x.append_row(sx::derive_features(cohort.patients[i], cut, spec));
      labels.push_back(cohort.labels[i]);
    }
    return x;
  };
  std::vector<int> train_labels, test_labels;
  const sx::SparseMatrix train_x = matrix_for(train_rows, train_labels);
  const sx::SparseMatrix test_x = matrix_for(test_rows, test_labels);
  man.config = sx::cohort_config_to_json(cc);
  man.config["test_fraction"] = o.out_test_matrix.empty() ? 0.0 : o.test_fraction;
  man.seeds = {{"cohort", o.seed}, {"split", split_seed}, {"cutoffs", cutoff_seed}};
  if (!o.out_cohort.empty()) write_recorded(o.out_cohort, sx::cohort_to_jsonl(raw), man);
  if (!o.out_matrix.empty()) write_matrix_file(o.out_matrix, train_x, spec.names(), train_labels, man);
  if (!o.out_test_matrix.empty()) write_matrix_file(o.out_test_matrix, test_x, spec.names(), test_labels, man);
  write_manifest(manifest_path(o, o.out_matrix.empty() ? o.out_cohort : o.out_matrix), man);
  auto planted = json::array();
  for (const auto& p : raw.ground_truth) planted.push_back({{"code", p.code.name()}, {"hazard", p.hazard}});
  std::cout << json{{"patients_generated", raw.patients.size()},
                    {"patients_kept", cohort.patients.size()},
                    {"columns", spec.size()},
                    {"train_rows", train_rows.size()},
                    {"test_rows", test_rows.size()},
                    {"sparsity", 1.0 - train_x.density()},
                    {"planted", planted}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const Options& o, bool select) {
  sx::RunManifest man;
  man.subcommand = select ? "select" : "train";
  sx::TrainConfig t = train_config(o, man);
  if (o.print_config) {
    std::cout << sx::train_config_to_json(t).dump(2) << "\n";
    return 0;
  }
  require_seed(o, man.subcommand);
  if (o.data.empty() || o.out.empty()) throw sx::ValidationError(man.subcommand + " needs --data and --out");
  const MatrixFile f = read_matrix_file(o.data, man);
  const auto model_seed = sx::Rng::mix(o.seed, 5);
  auto result = sx::train(named_model(f, model_seed), {f.data.x, f.data.y}, t);
  man.config = sx::train_config_to_json(t);
  man.seeds = {{"training", o.seed}, {"model", model_seed}};
  write_recorded(o.out, sx::model_to_json(result.model).dump() + "\n", man);
  json out{{"train_auc", result.history.back().train_auc}, {"history", history_json(result.history)}};
  if (select) {
    const auto sel = sx::binmask_select(result.model);
    const auto on = sx::selection_mask(result.model.input_dim(), sel);
    out["selected"] = sel.size();
    out["selected_train_auc"] = sx::model_auc(result.model, f.data, on);
    std::vector<std::string> names;
    for (std::size_t c : sel) names.push_back(f.names[c]);
    out["features"] = names;
    if (!o.out_selection.empty()) write_recorded(o.out_selection, selection_csv(sel, f.names), man);
  }
  write_manifest(manifest_path(o, o.out), man);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_reduce(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "reduce";
  sx::RemovalOptions ro;
  ro.stop_delta = o.stop_delta.value_or(0.006);
  ro.baseline = sx::stop_baseline_from(o.stop_baseline);
  ro.threads = o.threads;
  man.config = {{"stop_delta", ro.stop_delta}, {"stop_baseline", sx::to_string(ro.baseline)}};
  if (o.print_config) {
    std::cout << man.config.dump(2) << "\n";
    return 0;
  }
  if (o.model.empty() || o.data.empty() || o.out.empty())
    throw sx::ValidationError("reduce needs --model, --data and --out");
  const sx::MlpModel m = read_model(o.model, man);
  const MatrixFile f = read_matrix_file(o.data, man);
  const auto selected = o.selection.empty() ? sx::binmask_select(m) : read_selection(o.selection, man);
  const auto r = sx::iterative_removal(m, f.data.x, f.data.y, selected, ro);
  write_recorded(o.out, selection_csv(r.kept, f.names), man);
  if (!o.out_trace.empty()) write_recorded(o.out_trace, sx::trace_csv(r.trace, f.names), man);
  write_manifest(manifest_path(o, o.out), man);
  std::cout << json{{"input_features", selected.size()},
                    {"kept", r.kept.size()},
                    {"baseline_auc", r.trace.baseline},
                    {"final_auc", r.final_auc},
                    {"trace", sx::trace_to_json(r.trace)}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_retrain(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "retrain";
  sx::TrainConfig t = train_config(o, man);
  if (o.print_config) {
    std::cout << sx::train_config_to_json(t).dump(2) << "\n";
    return 0;
  }
  require_seed(o, "retrain");
  if (o.data.empty() || o.selection.empty() || o.out.empty())
    throw sx::ValidationError("retrain needs --data, --selection and --out");
  const MatrixFile f = read_matrix_file(o.data, man);
  sx::StageData data;
  data.train = f.data;
  data.names = f.names;
  if (!o.test.empty()) {
    const MatrixFile tf = read_matrix_file(o.test, man);
    if (tf.names != f.names) throw sx::ValidationError("test matrix columns differ from training matrix");
    data.test = tf.data;
  }
  const auto selected = read_selection(o.selection, man);
  const sx::StageOptions so{o.n_boot.value_or(1000), sx::Rng::mix(o.seed, 7), sx::Rng::mix(o.seed, 9)};
  const auto r = sx::retrain_final(data, selected, t, so);
  man.config = sx::train_config_to_json(t);
  man.seeds = {{"training", o.seed}, {"model", so.model_seed}, {"bootstrap", so.bootstrap_seed}};
  write_recorded(o.out, sx::model_to_json(r.model).dump() + "\n", man);
  write_manifest(manifest_path(o, o.out), man);
  json out = sx::stage_summary_json(r);
  out["history"] = history_json(r.history);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_experiment(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "experiment";
  sx::ExperimentConfig cfg;
  if (!o.config.empty()) sx::merge_experiment_config(parse_json(read_recorded(o.config, man), "config"), cfg);
  o.train.apply(cfg.train);
  if (o.stop_delta) cfg.removal.stop_delta = *o.stop_delta;
  if (o.seed_option->count()) cfg.seed = o.seed;
  if (o.n_boot) cfg.n_boot = *o.n_boot;
  cfg.removal.baseline = sx::stop_baseline_from(o.stop_baseline);
  cfg.removal.threads = o.threads;
  if (o.print_config) {
    std::cout << sx::experiment_config_to_json(cfg).dump(2) << "\n";
    return 0;
  }
  require_seed(o, "experiment");
  if (o.out_dir.empty()) throw sx::ValidationError("experiment needs --out-dir");
  cfg.train.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto report = sx::run_experiment(cfg);
  std::error_code ec;
  std::filesystem::create_directories(o.out_dir, ec);
  if (ec) throw sx::IoError("cannot create directory " + o.out_dir + ": " + ec.message());
  man.config = sx::experiment_config_to_json(cfg);
  const auto& s = report.seeds;
  man.seeds = {{"master", cfg.seed},          {"cohort", s.cohort},
               {"split", s.split},            {"test_cutoffs", s.test_cutoffs},
               {"train_cutoffs", s.train_cutoffs}, {"full_model", s.full_model},
               {"binmask_model", s.binmask_model}, {"final_model", s.final_model},
               {"training", s.training},      {"bootstrap", s.bootstrap}};
  sx::RunManifest files;
  for (const auto& [name, text] : sx::experiment_files(report, o.with_svg)) {
    sx::write_file((std::filesystem::path(o.out_dir) / name).string(), text);
    man.outputs[name] = sx::sha256_hex(text);
  }
  write_manifest((std::filesystem::path(o.out_dir) / "manifest.json").string(), man);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "experiment finished in " << seconds << " s\n";
  std::cout << sx::experiment_summary(report).dump() << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "report";
  if (o.model.empty() || o.data.empty()) throw sx::ValidationError("report needs --model and --data");
  const sx::MlpModel m = read_model(o.model, man);
  const MatrixFile f = read_matrix_file(o.data, man);
  // A model trained on a column subset is scored on those columns.
  sx::SparseMatrix x = f.data.x;
  if (m.input_dim() != x.cols()) {
    if (m.feature_columns.size() != m.input_dim()) throw sx::ValidationError("model does not match data width");
    x = x.project(m.feature_columns);
  }
  const auto ranking = sx::univariate_model_auc(m, x, f.data.y);
  std::map<std::string, std::string> stage_of;
  for (std::size_t i = 0; i < m.input_dim(); ++i)
    if (m.input_mask.on(i)) stage_of[sx::feature_name(m, i)] = o.stage;
  const std::string csv = sx::ranking_to_csv(ranking, stage_of);
  if (!o.svg.empty()) write_recorded(o.svg, sx::ranking_to_svg(ranking), man);
  if (!o.out.empty()) {
    write_recorded(o.out, csv, man);
    write_manifest(manifest_path(o, o.out), man);
  } else {
    if (!o.svg.empty()) write_manifest(manifest_path(o, o.svg), man);
    std::cout << csv;
  }
  return 0;
}

void print_sweep(const std::vector<sx::SweepRow>& rows) {
  for (const auto& r : rows)
    std::cout << "sweep axiom=" << sx::to_string(r.axiom) << " checks=" << r.checks << " holds=" << r.holds
              << " violated=" << r.violated << " precondition_unmet=" << r.precondition_unmet
              << " max_deviation=" << sx::format_double(r.max_deviation) << "\n";
}

int cmd_axioms(const Options& o) {
  sx::RunManifest man;
  const auto demo = sx::theorem1_demo(o.steps);
  std::cout << demo.text;
  std::vector<sx::MlpModel> models;
  if (!o.model.empty()) {
    models.push_back(read_model(o.model, man));
  } else {
    const std::vector<std::size_t> dead{3};
    for (std::size_t k = 0; k < o.models; ++k) models.push_back(sx::random_mlp(sx::Rng::mix(o.seed, k), 4, dead));
  }
  sx::SweepConfig sc;
  sc.pairs = o.pairs;
  sc.steps = o.sweep_steps;
  sc.seed = o.seed;
  print_sweep(sx::axiom_sweep(models, sc));
  return 0;
}

std::vector<double> parse_input(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      out.push_back(sx::parse_double(item));
    } catch (const sx::Error&) {
      throw sx::ValidationError("bad input value '" + item + "'");
    }
  }
  return out;
}

int cmd_explain(const Options& o) {
  sx::RunManifest man;
  man.subcommand = "explain";
  if (o.graph.empty() == o.model.empty()) throw sx::ValidationError("explain needs exactly one of --graph or --model");
  std::optional<sx::GraphDocument> doc;
  if (!o.graph.empty()) {
    doc = sx::graph_from_json(parse_json(read_recorded(o.graph, man), "graph file"));
  } else {
    // The model's input mask becomes the cut.
    const sx::MlpModel m = read_model(o.model, man);
    std::vector<std::size_t> on;
    for (std::size_t i = 0; i < m.input_dim(); ++i)
      if (m.input_mask.on(i)) on.push_back(i);
    auto masked = sx::to_compgraph(m, on);
    doc = sx::GraphDocument{std::move(masked.graph), std::move(masked.cut)};
  }
  const sx::CompGraph& g = doc->graph;
  const sx::Cut cut = doc->cut ? *doc->cut : sx::Cut::output_only(g);
  if (!o.out.empty()) {
    write_recorded(o.out, sx::graph_to_json(g, &cut).dump(2) + "\n", man);
    write_manifest(manifest_path(o, o.out), man);
  }
  if (o.input.empty()) {
    if (o.out.empty()) throw sx::ValidationError("explain needs --input (or --out to export the graph)");
    return 0;
  }
  const auto x = parse_input(o.input);
  const auto ev = sx::evaluate(g, x);
  const auto ex = sx::explain(g, cut, x);
  const double replayed = sx::replay(g, cut, ex);
  std::cout << json{{"output", ev.output},
                    {"boundary", sx::explanation_to_json(g, ex)},
                    {"replay", replayed},
                    {"sound", replayed == ev.output}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sound explanations as graph cuts, path-attribution axioms, and L0 feature selection"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_seed = [&](CLI::App* sub) { o.seed_option = sub->add_option("--seed", o.seed, "random seed"); };
  auto add_print = [&](CLI::App* sub) {
    sub->add_flag("--print-config", o.print_config, "print the effective configuration and exit");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic cohort and its feature matrix");
  gen->add_option("--config", o.config, "cohort config JSON");
  gen->add_option("--out-cohort", o.out_cohort, "cohort JSON-lines output");
  gen->add_option("--out-matrix", o.out_matrix, "feature matrix output (with .cols and .labels sidecars)");
  gen->add_option("--out-test-matrix", o.out_test_matrix, "held-out test matrix (stratified split)");
  gen->add_option("--test-fraction", o.test_fraction, "test share when splitting (default 0.2)");
  gen->add_option("--manifest", o.manifest, "manifest path");
  add_seed(gen);
  add_print(gen);

  auto* trn = app.add_subcommand("train", "train an MLP with L0 gates on a feature matrix");
  auto* sel = app.add_subcommand("select", "BinMask stage: train and select inputs by smoothed mask");
  for (auto* sub : {trn, sel}) {
    sub->add_option("--data", o.data, "feature matrix");
    sub->add_option("--config", o.config, "train config JSON");
    sub->add_option("--out", o.out, "model JSON output");
    sub->add_option("--manifest", o.manifest, "manifest path");
    o.train.add_to(sub);
    add_seed(sub);
    add_print(sub);
  }
  sel->add_option("--out-selection", o.out_selection, "selected features CSV");

  auto* red = app.add_subcommand("reduce", "iterative feature removal under an AUC budget");
  red->add_option("--model", o.model, "trained model JSON");
  red->add_option("--data", o.data, "training feature matrix");
  red->add_option("--selection", o.selection, "starting selection CSV (default: model's BinMask selection)");
  red->add_option("--stop-delta", o.stop_delta, "allowed training AUC drop (default 0.006)");
  red->add_option("--stop-baseline", o.stop_baseline, "stage or iteration")->check(CLI::IsMember({"stage", "iteration"}));
  red->add_option("--threads", o.threads, "parallel candidate evaluations")->check(CLI::PositiveNumber);
  red->add_option("--out", o.out, "surviving features CSV");
  red->add_option("--out-trace", o.out_trace, "removal trace CSV");
  red->add_option("--manifest", o.manifest, "manifest path");
  add_seed(red);
  add_print(red);

  auto* ret = app.add_subcommand("retrain", "retrain from scratch on selected columns");
  ret->add_option("--data", o.data, "training feature matrix");
  ret->add_option("--test", o.test, "test feature matrix");
  ret->add_option("--selection", o.selection, "selected features CSV");
  ret->add_option("--config", o.config, "train config JSON");
  ret->add_option("--out", o.out, "model JSON output");
  ret->add_option("--n-boot", o.n_boot, "bootstrap resamples");
  ret->add_option("--manifest", o.manifest, "manifest path");
  o.train.add_to(ret);
  add_seed(ret);
  add_print(ret);

  auto* exp = app.add_subcommand("experiment", "full run: cohort, three stages, reports");
  exp->add_option("--config", o.config, "experiment config JSON");
  exp->add_option("--out-dir", o.out_dir, "report directory");
  exp->add_flag("--svg", o.with_svg, "also write ranking.svg");
  exp->add_option("--threads", o.threads, "parallel candidate evaluations")->check(CLI::PositiveNumber);
  exp->add_option("--stop-delta", o.stop_delta, "allowed training AUC drop");
  exp->add_option("--stop-baseline", o.stop_baseline, "stage or iteration")->check(CLI::IsMember({"stage", "iteration"}));
  exp->add_option("--n-boot", o.n_boot, "bootstrap resamples");
  o.train.add_to(exp);
  add_seed(exp);
  add_print(exp);

  auto* rep = app.add_subcommand("report", "univariate model AUC ranking");
  rep->add_option("--model", o.model, "model JSON");
  rep->add_option("--data", o.data, "test feature matrix");
  rep->add_option("--out", o.out, "ranking CSV (default stdout)");
  rep->add_option("--svg", o.svg, "ranking bar chart SVG");
  rep->add_option("--stage", o.stage, "label for the stage_selected column");
  rep->add_option("--manifest", o.manifest, "manifest path");
  add_seed(rep);

  auto* axm = app.add_subcommand("axioms", "impossibility demo and axiom sweeps");
  axm->add_option("--model", o.model, "sweep this model instead of random MLPs");
  axm->add_option("--models", o.models, "number of random MLPs")->check(CLI::PositiveNumber);
  axm->add_option("--pairs", o.pairs, "random (input, baseline) pairs per model")->check(CLI::PositiveNumber);
  axm->add_option("--steps", o.steps, "quadrature steps for the demo")->check(CLI::PositiveNumber);
  axm->add_option("--sweep-steps", o.sweep_steps, "quadrature steps for sweeps")->check(CLI::PositiveNumber);
  add_seed(axm);

  auto* exl = app.add_subcommand("explain", "evaluate, explain and replay a graph");
  exl->add_option("--graph", o.graph, "compgraph JSON");
  exl->add_option("--model", o.model, "model JSON, exported with its input mask as the cut");
  exl->add_option("--input", o.input, "comma-separated input values");
  exl->add_option("--out", o.out, "write the graph (with cut) as JSON");
  exl->add_option("--manifest", o.manifest, "manifest path");
  add_seed(exl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  // The --seed option belongs to whichever subcommand ran.
  CLI::App* active = app.get_subcommands().front();
  o.seed_option = active->get_option("--seed");

  try {
    const std::string name = active->get_name();
    if (name == "gen") return cmd_gen(o);
    if (name == "train") return cmd_train(o, false);
    if (name == "select") return cmd_train(o, true);
    if (name == "reduce") return cmd_reduce(o);
    if (name == "retrain") return cmd_retrain(o);
    if (name == "experiment") return cmd_experiment(o);
    if (name == "report") return cmd_report(o);
    if (name == "axioms") return cmd_axioms(o);
    if (name == "explain") return cmd_explain(o);
    std::cerr << app.help();
    return 1;
  } catch (const sx::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
