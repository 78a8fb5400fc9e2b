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

// Two-hidden-layer tanh MLP with a sigmoid head, L0 gates on every weight and
// a BinMask gate on every input.
//
// Gates are hard in the forward pass (on iff theta >= 0, i.e. the surrogate
// probability sigmoid(theta / tau) is at least 0.5). The backward pass is
// straight-through: the derivative of sigmoid(theta / tau) stands in for the
// step. The L0 penalty is the sum of surrogate probabilities. The input
// mask additionally keeps an exponential moving average of its binary gates,
// which is what feature selection thresholds.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "soundexpl/compgraph.hpp"
#include "soundexpl/error.hpp"
#include "soundexpl/metrics.hpp"
#include "soundexpl/rng.hpp"
#include "soundexpl/sparse.hpp"

namespace soundexpl {

enum class Gating { Hard, Off };

struct MlpConfig {
  std::size_t input_dim = 0;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 20;
  double temperature = 1.0;
  double ema_decay = 0.99;
  double initial_gate = 0.9;
  std::uint64_t seed = 0;
};

struct GateVector {
  std::vector<double> theta;
  std::vector<double> ema_mask;
  double temperature = 1.0;
  double ema_decay = 0.99;
  std::uint64_t ema_updates = 0;

  static GateVector open(std::size_t n, double initial_prob, double temperature, double ema_decay) {
    GateVector g;
    g.temperature = temperature;
    g.ema_decay = ema_decay;
    g.theta.assign(n, temperature * std::log(initial_prob / (1.0 - initial_prob)));
    g.ema_mask.assign(n, initial_prob >= 0.5 ? 1.0 : 0.0);
    return g;
  }

  std::size_t size() const { return theta.size(); }
  bool on(std::size_t i) const { return theta[i] >= 0.0; }
  double gate(std::size_t i) const { return on(i) ? 1.0 : 0.0; }
  double prob(std::size_t i) const { return sigmoid(theta[i] / temperature); }
  // d/dtheta sigmoid(theta / tau).
  double prob_slope(std::size_t i) const {
    const double s = prob(i);
    return s * (1.0 - s) / temperature;
  }
  double penalty() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) acc += prob(i);
    return acc;
  }
  void update_ema() {
    for (std::size_t i = 0; i < size(); ++i)
      ema_mask[i] = ema_decay * ema_mask[i] + (1.0 - ema_decay) * gate(i);
    ++ema_updates;
  }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
  GateVector gates;            // one per weight

  double w(std::size_t o, std::size_t i) const { return weight[o * in + i]; }
};

struct MlpModel {
  MlpConfig config;
  std::vector<double> input_scale;  // raw input i is multiplied by input_scale[i]
  GateVector input_mask;
  DenseLayer layer1;
  DenseLayer layer2;
  DenseLayer head;
  // Optional provenance: name and source column of each input.
  std::vector<std::string> feature_names;
  std::vector<std::size_t> feature_columns;

  std::size_t input_dim() const { return config.input_dim; }
};

inline DenseLayer make_layer(std::size_t in, std::size_t out, const MlpConfig& cfg, Rng& rng) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  l.weight.resize(in * out);
  for (auto& w : l.weight) w = rng.uniform(-limit, limit);
  l.bias.assign(out, 0.0);
  l.gates = GateVector::open(in * out, cfg.initial_gate, cfg.temperature, cfg.ema_decay);
  return l;
}

inline MlpModel init_mlp(const MlpConfig& cfg) {
  if (cfg.input_dim == 0 || cfg.hidden1 == 0 || cfg.hidden2 == 0)
    throw ValidationError("mlp: dimensions must be positive");
  if (!(cfg.temperature > 0.0)) throw ValidationError("mlp: temperature must be positive");
  if (!(cfg.ema_decay > 0.0 && cfg.ema_decay < 1.0)) throw ValidationError("mlp: ema decay must be in (0, 1)");
  if (!(cfg.initial_gate > 0.0 && cfg.initial_gate < 1.0)) throw ValidationError("mlp: initial gate must be in (0, 1)");
  Rng rng(cfg.seed);
  MlpModel m;
  m.config = cfg;
  m.input_scale.assign(cfg.input_dim, 1.0);
  m.input_mask = GateVector::open(cfg.input_dim, cfg.initial_gate, cfg.temperature, cfg.ema_decay);
  m.layer1 = make_layer(cfg.input_dim, cfg.hidden1, cfg, rng);
  m.layer2 = make_layer(cfg.hidden1, cfg.hidden2, cfg, rng);
  m.head = make_layer(cfg.hidden2, 1, cfg, rng);
  return m;
}

// Effective weights for one forward mode: gates, input scale and input mask
// folded into the matrices. `input_on`, when non-empty, replaces the input
// mask's hard gates.
struct FoldedMlp {
  std::size_t n = 0, h1 = 0, h2 = 0;
  std::vector<double> first;  // n x h1: column of input i is contiguous
  std::vector<double> b1;
  std::vector<double> second;  // h2 x h1
  std::vector<double> b2;
  std::vector<double> third;  // h2
  double b3 = 0.0;
  std::vector<double> input_gate;  // effective 0/1 per input
};

inline FoldedMlp fold(const MlpModel& m, Gating gating, std::span<const std::uint8_t> input_on = {}) {
  if (!input_on.empty() && input_on.size() != m.input_dim())
    throw ValidationError("input override has wrong length");
  const bool hard = gating == Gating::Hard;
  FoldedMlp f;
  f.n = m.input_dim();
  f.h1 = m.layer1.out;
  f.h2 = m.layer2.out;
  f.input_gate.resize(f.n);
  for (std::size_t i = 0; i < f.n; ++i)
    f.input_gate[i] = !input_on.empty() ? (input_on[i] ? 1.0 : 0.0) : (hard ? m.input_mask.gate(i) : 1.0);
  f.first.resize(f.n * f.h1);
  for (std::size_t i = 0; i < f.n; ++i)
    for (std::size_t j = 0; j < f.h1; ++j) {
      const std::size_t k = j * f.n + i;
      const double g = hard ? m.layer1.gates.gate(k) : 1.0;
      f.first[i * f.h1 + j] = m.layer1.weight[k] * g * m.input_scale[i] * f.input_gate[i];
    }
  f.b1 = m.layer1.bias;
  f.second.resize(f.h2 * f.h1);
  for (std::size_t k = 0; k < f.second.size(); ++k)
    f.second[k] = m.layer2.weight[k] * (hard ? m.layer2.gates.gate(k) : 1.0);
  f.b2 = m.layer2.bias;
  f.third.resize(f.h2);
  for (std::size_t k = 0; k < f.h2; ++k) f.third[k] = m.head.weight[k] * (hard ? m.head.gates.gate(k) : 1.0);
  f.b3 = m.head.bias[0];
  return f;
}

struct Activations {
  std::vector<double> h1, h2;
  double logit = 0.0;
  double prob = 0.0;
};

// Zero entries may be present in `row`; they contribute nothing.
inline double forward_row(const FoldedMlp& f, std::span<const SparseEntry> row, Activations& act) {
  act.h1.assign(f.h1, 0.0);
  for (const auto& e : row) {
    const double* col = &f.first[e.col * f.h1];
    for (std::size_t j = 0; j < f.h1; ++j) act.h1[j] += e.value * col[j];
  }
  for (std::size_t j = 0; j < f.h1; ++j) act.h1[j] = std::tanh(act.h1[j] + f.b1[j]);
  act.h2.assign(f.h2, 0.0);
  for (std::size_t o = 0; o < f.h2; ++o) {
    double acc = 0.0;
    const double* w = &f.second[o * f.h1];
    for (std::size_t j = 0; j < f.h1; ++j) acc += w[j] * act.h1[j];
    act.h2[o] = std::tanh(acc + f.b2[o]);
  }
  double acc = 0.0;
  for (std::size_t o = 0; o < f.h2; ++o) acc += f.third[o] * act.h2[o];
  act.logit = acc + f.b3;
  act.prob = sigmoid(act.logit);
  return act.prob;
}

inline void check_columns(const MlpModel& m, std::size_t cols) {
  if (cols != m.input_dim())
    throw ValidationError("batch has " + std::to_string(cols) + " columns, model expects " +
                          std::to_string(m.input_dim()));
}

inline std::vector<double> forward(const MlpModel& m, const SparseMatrix& batch, Gating gating,
                                   std::span<const std::uint8_t> input_on = {}) {
  check_columns(m, batch.cols());
  const FoldedMlp f = fold(m, gating, input_on);
  std::vector<double> out(batch.rows());
  Activations act;
  for (std::size_t r = 0; r < batch.rows(); ++r) out[r] = forward_row(f, batch.row(r), act);
  return out;
}

inline SparseRow dense_as_row(std::span<const double> x) {
  SparseRow row(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) row[i] = {i, x[i]};
  return row;
}

inline double forward_dense(const MlpModel& m, std::span<const double> x, Gating gating = Gating::Hard) {
  check_columns(m, x.size());
  Activations act;
  return forward_row(fold(m, gating), dense_as_row(x), act);
}

// d prob / d x (raw inputs), hard gating.
inline std::vector<double> input_gradient(const FoldedMlp& f, std::span<const double> x) {
  Activations act;
  const auto row = dense_as_row(x);
  forward_row(f, row, act);
  const double d3 = act.prob * (1.0 - act.prob);
  std::vector<double> d1(f.h1, 0.0);
  for (std::size_t o = 0; o < f.h2; ++o) {
    const double d2 = d3 * f.third[o] * (1.0 - act.h2[o] * act.h2[o]);
    for (std::size_t j = 0; j < f.h1; ++j) d1[j] += d2 * f.second[o * f.h1 + j];
  }
  for (std::size_t j = 0; j < f.h1; ++j) d1[j] *= 1.0 - act.h1[j] * act.h1[j];
  std::vector<double> g(f.n, 0.0);
  for (std::size_t i = 0; i < f.n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f.h1; ++j) acc += f.first[i * f.h1 + j] * d1[j];
    g[i] = acc;
  }
  return g;
}

// Gradients laid out like the parameters.
struct MlpGradients {
  std::vector<double> w1, b1, theta1, w2, b2, theta2, w3, b3, theta3, theta_in;
};

struct LossResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;
  MlpGradients grad;
};

inline constexpr double kProbClip = 1e-9;

// Mean binary cross-entropy of hard-gated predictions plus L0 surrogate
// penalties; straight-through gradients for every gate.
inline LossResult loss_and_gradients(const MlpModel& m, const SparseMatrix& batch, std::span<const int> labels,
                                     double lambda_mask, double lambda_weight) {
  check_columns(m, batch.cols());
  if (labels.size() != batch.rows()) throw ValidationError("labels and batch differ in length");
  if (batch.rows() == 0) throw ValidationError("empty batch");
  for (int y : labels)
    if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
  const FoldedMlp f = fold(m, Gating::Hard);
  const std::size_t n = f.n, h1 = f.h1, h2 = f.h2;
  const double inv_batch = 1.0 / static_cast<double>(batch.rows());

  // Gradients with respect to the folded (effective) weights.
  std::vector<double> g_first(n * h1, 0.0), g_b1(h1, 0.0), g_second(h2 * h1, 0.0), g_b2(h2, 0.0),
      g_third(h2, 0.0);
  double g_b3 = 0.0;
  double ce = 0.0;
  Activations act;
  std::vector<double> d1(h1), d2(h2);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = batch.row(r);
    forward_row(f, row, act);
    const double y = labels[r];
    const double p = std::clamp(act.prob, kProbClip, 1.0 - kProbClip);
    ce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    const bool clipped = act.prob < kProbClip || act.prob > 1.0 - kProbClip;
    const double d3 = clipped ? 0.0 : (act.prob - y) * inv_batch;
    g_b3 += d3;
    for (std::size_t o = 0; o < h2; ++o) {
      g_third[o] += d3 * act.h2[o];
      d2[o] = d3 * f.third[o] * (1.0 - act.h2[o] * act.h2[o]);
      g_b2[o] += d2[o];
    }
    std::fill(d1.begin(), d1.end(), 0.0);
    for (std::size_t o = 0; o < h2; ++o) {
      const double* w = &f.second[o * h1];
      double* gw = &g_second[o * h1];
      for (std::size_t j = 0; j < h1; ++j) {
        gw[j] += d2[o] * act.h1[j];
        d1[j] += d2[o] * w[j];
      }
    }
    for (std::size_t j = 0; j < h1; ++j) {
      d1[j] *= 1.0 - act.h1[j] * act.h1[j];
      g_b1[j] += d1[j];
    }
    for (const auto& e : row) {
      double* gc = &g_first[e.col * h1];
      for (std::size_t j = 0; j < h1; ++j) gc[j] += e.value * d1[j];
    }
  }

  LossResult res;
  res.cross_entropy = ce * inv_batch;
  res.penalty = lambda_mask * m.input_mask.penalty() + lambda_weight * (m.layer1.gates.penalty() +
                                                                        m.layer2.gates.penalty() +
                                                                        m.head.gates.penalty());
  res.loss = res.cross_entropy + res.penalty;
  if (!std::isfinite(res.loss)) throw NumericError("non-finite loss");

  auto& g = res.grad;
  // Layer 1: first[i][j] = W[j][i] * G[j][i] * s_i * b_i.
  g.w1.assign(n * h1, 0.0);
  g.theta1.assign(n * h1, 0.0);
  g.theta_in.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = m.input_scale[i];
    const double b = f.input_gate[i];
    double g_gate = 0.0;
    for (std::size_t j = 0; j < h1; ++j) {
      const std::size_t k = j * n + i;
      const double gc = g_first[i * h1 + j];
      const double w = m.layer1.weight[k];
      const double gate = m.layer1.gates.gate(k);
      g.w1[k] = gc * gate * s * b;
      g.theta1[k] = gc * w * s * b * m.layer1.gates.prob_slope(k) +
                    lambda_weight * m.layer1.gates.prob_slope(k);
      g_gate += gc * w * gate * s;
    }
    g.theta_in[i] = (g_gate + lambda_mask) * m.input_mask.prob_slope(i);
  }
  g.b1 = g_b1;
  auto dense_grads = [&](const DenseLayer& layer, const std::vector<double>& g_eff, std::vector<double>& gw,
                         std::vector<double>& gt) {
    gw.resize(g_eff.size());
    gt.resize(g_eff.size());
    for (std::size_t k = 0; k < g_eff.size(); ++k) {
      gw[k] = g_eff[k] * layer.gates.gate(k);
      gt[k] = (g_eff[k] * layer.weight[k] + lambda_weight) * layer.gates.prob_slope(k);
    }
  };
  dense_grads(m.layer2, g_second, g.w2, g.theta2);
  g.b2 = g_b2;
  dense_grads(m.head, g_third, g.w3, g.theta3);
  g.b3 = {g_b3};
  return res;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  double lr = 1e-3;
  double gate_lr = 1e-2;  // learning rate for all gate parameters
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  double lambda_mask = 1e-3;
  double lambda_weight = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool resample_cutoffs = true;
  bool learn_input_mask = true;  // when false the input gates keep their initial values

  void validate() const {
    if (!(lr > 0.0) || !(gate_lr > 0.0)) throw ValidationError("train: learning rates must be positive");
    if (batch_size == 0 || epochs == 0) throw ValidationError("train: batch size and epochs must be positive");
    if (lambda_mask < 0.0 || lambda_weight < 0.0) throw ValidationError("train: penalties must be non-negative");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0))
      throw ValidationError("train: invalid optimizer hyperparameters");
  }
};

struct Dataset {
  SparseMatrix features;
  std::vector<int> labels;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_auc = 0.0;
};

// Called once per minibatch with the dataset rows of the batch; returns the
// regenerated feature rows for exactly those rows (in order).
using MinibatchRefresh = std::function<SparseMatrix(std::span<const std::size_t> rows, std::uint64_t batch_seed)>;

namespace detail {

struct AdamBlock {
  std::vector<double> m, v;
};

inline void adam_update(std::vector<double>& param, const std::vector<double>& grad, AdamBlock& state,
                        double lr, const TrainConfig& cfg, std::uint64_t step) {
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < param.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grad[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
    param[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + cfg.epsilon);
  }
}

}  // namespace detail

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> history;
};

inline TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg,
                         const MinibatchRefresh& refresh = {}) {
  cfg.validate();
  check_columns(model, data.features.cols());
  if (data.features.rows() == 0 || data.labels.size() != data.features.rows())
    throw ValidationError("train: empty dataset or label count mismatch");
  const auto counts = count_classes(data.labels);
  if (counts.positives == 0 || counts.negatives == 0)
    throw SingleClassError("train: both classes are required (AUC undefined otherwise)");

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.features.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<detail::AdamBlock> adam(10);
  std::uint64_t step = 0;
  TrainResult out;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      batch_labels.clear();
      for (std::size_t r : rows) batch_labels.push_back(data.labels[r]);
      ++step;
      const SparseMatrix batch =
          refresh ? refresh(rows, Rng::mix(cfg.seed, step)) : data.features.select_rows(rows);
      if (batch.rows() != rows.size()) throw ValidationError("train: refresh returned wrong row count");
      const LossResult lr = loss_and_gradients(model, batch, batch_labels, cfg.lambda_mask, cfg.lambda_weight);
      loss_sum += lr.loss;
      ++batches;
      const auto& g = lr.grad;
      detail::adam_update(model.layer1.weight, g.w1, adam[0], cfg.lr, cfg, step);
      detail::adam_update(model.layer1.bias, g.b1, adam[1], cfg.lr, cfg, step);
      detail::adam_update(model.layer1.gates.theta, g.theta1, adam[2], cfg.gate_lr, cfg, step);
      detail::adam_update(model.layer2.weight, g.w2, adam[3], cfg.lr, cfg, step);
      detail::adam_update(model.layer2.bias, g.b2, adam[4], cfg.lr, cfg, step);
      detail::adam_update(model.layer2.gates.theta, g.theta2, adam[5], cfg.gate_lr, cfg, step);
      detail::adam_update(model.head.weight, g.w3, adam[6], cfg.lr, cfg, step);
      detail::adam_update(model.head.bias, g.b3, adam[7], cfg.lr, cfg, step);
      detail::adam_update(model.head.gates.theta, g.theta3, adam[8], cfg.gate_lr, cfg, step);
      if (cfg.learn_input_mask)
        detail::adam_update(model.input_mask.theta, g.theta_in, adam[9], cfg.gate_lr, cfg, step);
      model.input_mask.update_ema();
      model.layer1.gates.update_ema();
      model.layer2.gates.update_ema();
      model.head.gates.update_ema();
    }
    const auto scores = forward(model, data.features, Gating::Hard);
    out.history.push_back({epoch + 1, loss_sum / static_cast<double>(batches), auc(scores, data.labels)});
  }
  out.model = std::move(model);
  return out;
}

class StaleMaskError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Features whose smoothed mask is at least 0.5.
inline std::vector<std::size_t> binmask_select(const MlpModel& m) {
  if (m.input_mask.ema_updates == 0)
    throw StaleMaskError("binmask: smoothed mask was never updated (model untrained)");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.input_dim(); ++i)
    if (m.input_mask.ema_mask[i] >= 0.5) out.push_back(i);
  return out;
}

// Fit input_scale to 1 / mean |x| over the nonzero entries of each column.
inline void fit_input_scale(MlpModel& m, const SparseMatrix& x) {
  check_columns(m, x.cols());
  std::vector<double> sum(x.cols(), 0.0);
  std::vector<std::size_t> count(x.cols(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& e : x.row(r)) {
      sum[e.col] += std::fabs(e.value);
      ++count[e.col];
    }
  for (std::size_t i = 0; i < x.cols(); ++i)
    m.input_scale[i] = count[i] == 0 ? 1.0 : static_cast<double>(count[i]) / sum[i];
}

// ---------------------------------------------------------------------------
// Export to a computational graph with the input mask realised as a cut.

inline MaskedGraph to_compgraph(const MlpModel& m, std::span<const std::size_t> selected) {
  const FoldedMlp f = fold(m, Gating::Hard);
  GraphBuilder b;
  std::vector<VertexId> x(f.n);
  for (std::size_t i = 0; i < f.n; ++i)
    x[i] = b.add_input(i < m.feature_names.size() ? m.feature_names[i] : "f" + std::to_string(i));
  std::vector<VertexId> a1(f.h1);
  for (std::size_t j = 0; j < f.h1; ++j) {
    std::vector<double> c(f.n);
    for (std::size_t i = 0; i < f.n; ++i) c[i] = f.first[i * f.h1 + j];
    const VertexId z = b.add(OpSpec::affine(std::move(c), f.b1[j]), x, "z1_" + std::to_string(j));
    a1[j] = b.add(OpSpec::tanh(), {z}, "h1_" + std::to_string(j));
  }
  std::vector<VertexId> a2(f.h2);
  for (std::size_t o = 0; o < f.h2; ++o) {
    std::vector<double> c(f.second.begin() + static_cast<std::ptrdiff_t>(o * f.h1),
                          f.second.begin() + static_cast<std::ptrdiff_t>((o + 1) * f.h1));
    const VertexId z = b.add(OpSpec::affine(std::move(c), f.b2[o]), a1, "z2_" + std::to_string(o));
    a2[o] = b.add(OpSpec::tanh(), {z}, "h2_" + std::to_string(o));
  }
  const VertexId logit = b.add(OpSpec::affine(f.third, f.b3), a2, "logit");
  b.add_output(OpSpec::sigmoid(), {logit}, "risk");
  const CompGraph graph = std::move(b).build();
  std::vector<VertexId> chosen;
  for (std::size_t i : selected) {
    if (i >= f.n) throw ValidationError("to_compgraph: feature " + std::to_string(i) + " out of range");
    chosen.push_back(graph.inputs()[i]);
  }
  return mask_cut(graph, chosen);
}

// ---------------------------------------------------------------------------
// Model file.

inline constexpr const char* kModelFormatName = "soundexpl.mlp";
inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json gates_to_json(const GateVector& g) {
  return {{"theta", g.theta}, {"ema_mask", g.ema_mask}, {"ema_updates", g.ema_updates}};
}

inline void gates_from_json(const nlohmann::json& j, GateVector& g, const MlpConfig& cfg, std::size_t n) {
  g.theta = j.at("theta").get<std::vector<double>>();
  g.ema_mask = j.at("ema_mask").get<std::vector<double>>();
  g.ema_updates = j.at("ema_updates").get<std::uint64_t>();
  g.temperature = cfg.temperature;
  g.ema_decay = cfg.ema_decay;
  if (g.theta.size() != n || g.ema_mask.size() != n) throw ValidationError("model file: gate vector has wrong size");
}

inline nlohmann::json layer_to_json(const DenseLayer& l) {
  return {{"in", l.in}, {"out", l.out}, {"weight", l.weight}, {"bias", l.bias}, {"gates", gates_to_json(l.gates)}};
}

inline DenseLayer layer_from_json(const nlohmann::json& j, const MlpConfig& cfg, std::size_t in, std::size_t out) {
  DenseLayer l;
  l.in = j.at("in").get<std::size_t>();
  l.out = j.at("out").get<std::size_t>();
  if (l.in != in || l.out != out) throw ValidationError("model file: layer shape mismatch");
  l.weight = j.at("weight").get<std::vector<double>>();
  l.bias = j.at("bias").get<std::vector<double>>();
  if (l.weight.size() != in * out || l.bias.size() != out) throw ValidationError("model file: layer size mismatch");
  gates_from_json(j.at("gates"), l.gates, cfg, in * out);
  return l;
}

}  // namespace detail

inline nlohmann::json model_to_json(const MlpModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  j["config"] = {{"input_dim", m.config.input_dim},       {"hidden", {m.config.hidden1, m.config.hidden2}},
                 {"temperature", m.config.temperature},   {"ema_decay", m.config.ema_decay},
                 {"initial_gate", m.config.initial_gate}, {"seed", m.config.seed}};
  j["input_scale"] = m.input_scale;
  j["input_mask"] = detail::gates_to_json(m.input_mask);
  j["layers"] = {detail::layer_to_json(m.layer1), detail::layer_to_json(m.layer2), detail::layer_to_json(m.head)};
  j["feature_names"] = m.feature_names;
  j["feature_columns"] = m.feature_columns;
  return j;
}

inline MlpModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormatName) throw ValidationError("not a model document");
    if (j.at("version").get<int>() != kModelFormatVersion) throw ValidationError("unsupported model version");
    MlpModel m;
    const auto& c = j.at("config");
    m.config.input_dim = c.at("input_dim").get<std::size_t>();
    m.config.hidden1 = c.at("hidden").at(0).get<std::size_t>();
    m.config.hidden2 = c.at("hidden").at(1).get<std::size_t>();
    m.config.temperature = c.at("temperature").get<double>();
    m.config.ema_decay = c.at("ema_decay").get<double>();
    m.config.initial_gate = c.at("initial_gate").get<double>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    const std::size_t n = m.config.input_dim;
    m.input_scale = j.at("input_scale").get<std::vector<double>>();
    if (m.input_scale.size() != n) throw ValidationError("model file: input_scale has wrong size");
    detail::gates_from_json(j.at("input_mask"), m.input_mask, m.config, n);
    const auto& layers = j.at("layers");
    if (layers.size() != 3) throw ValidationError("model file: expected three layers");
    m.layer1 = detail::layer_from_json(layers[0], m.config, n, m.config.hidden1);
    m.layer2 = detail::layer_from_json(layers[1], m.config, m.config.hidden1, m.config.hidden2);
    m.head = detail::layer_from_json(layers[2], m.config, m.config.hidden2, 1);
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    m.feature_columns = j.value("feature_columns", std::vector<std::size_t>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace soundexpl
