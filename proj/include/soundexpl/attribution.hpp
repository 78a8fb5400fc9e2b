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

// Path-method attribution and checkers for the four attribution axioms
// (specificity, additivity, completeness, baseline invariance).
//
// a_i = integral over t in [0, 1] of d_i F(gamma(t)) * gamma_i'(t) dt,
// approximated with the midpoint rule on a uniform grid. Every sample point
// is a fixed function of the path, so the result is exactly linear in the
// gradient field and exact for affine F.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "soundexpl/error.hpp"
#include "soundexpl/neural.hpp"
#include "soundexpl/rng.hpp"
#include "soundexpl/sparse.hpp"

namespace soundexpl {

// Real-valued F: R^n -> R with a gradient (analytic, or central differences
// with step fd_step when none is supplied).
class DifferentiableFn {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

  DifferentiableFn(std::size_t dim, ValueFn value, GradientFn gradient = {}, double fd_step = 1e-5)
      : dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)), fd_step_(fd_step) {
    if (dim_ == 0) throw ValidationError("function dimension must be positive");
  }

  std::size_t dim() const { return dim_; }
  bool has_analytic_gradient() const { return static_cast<bool>(gradient_); }

  double value(std::span<const double> x) const {
    check(x);
    return value_(x);
  }

  std::vector<double> gradient(std::span<const double> x) const {
    check(x);
    return gradient_ ? gradient_(x) : finite_difference_gradient(x, fd_step_);
  }

  std::vector<double> finite_difference_gradient(std::span<const double> x, double h) const {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> g(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      const double saved = probe[i];
      probe[i] = saved + h;
      const double up = value_(probe);
      probe[i] = saved - h;
      const double down = value_(probe);
      probe[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    return g;
  }

  static DifferentiableFn affine(std::vector<double> coefficients, double bias = 0.0) {
    const std::size_t n = coefficients.size();
    auto c = std::make_shared<const std::vector<double>>(std::move(coefficients));
    return DifferentiableFn(
        n,
        [c, bias](std::span<const double> x) {
          double acc = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) acc += (*c)[i] * x[i];
          return acc + bias;
        },
        [c](std::span<const double>) { return *c; });
  }

  // Hard-gated MLP probability as a function of its raw inputs.
  static DifferentiableFn mlp(const MlpModel& model) {
    auto folded = std::make_shared<const FoldedMlp>(fold(model, Gating::Hard));
    return DifferentiableFn(
        model.input_dim(),
        [folded](std::span<const double> x) {
          Activations act;
          return forward_row(*folded, dense_as_row(x), act);
        },
        [folded](std::span<const double> x) { return input_gradient(*folded, x); });
  }

  friend DifferentiableFn operator+(const DifferentiableFn& a, const DifferentiableFn& b) {
    if (a.dim() != b.dim()) throw ValidationError("cannot add functions of different dimension");
    return DifferentiableFn(
        a.dim(), [a, b](std::span<const double> x) { return a.value(x) + b.value(x); },
        [a, b](std::span<const double> x) {
          auto g = a.gradient(x);
          const auto h = b.gradient(x);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += h[i];
          return g;
        });
  }

  friend DifferentiableFn operator-(const DifferentiableFn& a) {
    return DifferentiableFn(
        a.dim(), [a](std::span<const double> x) { return -a.value(x); },
        [a](std::span<const double> x) {
          auto g = a.gradient(x);
          for (auto& v : g) v = -v;
          return g;
        });
  }

 private:
  void check(std::span<const double> x) const {
    if (x.size() != dim_)
      throw InputArityError("function expects " + std::to_string(dim_) + " inputs, got " + std::to_string(x.size()));
  }

  std::size_t dim_;
  ValueFn value_;
  GradientFn gradient_;
  double fd_step_;
};

inline constexpr std::size_t kDefaultSteps = 1024;

// gamma(0) = baseline, gamma(1) = input, optionally through waypoints. Each
// linear segment receives `steps` midpoint samples.
struct PathSpec {
  enum class Kind { StraightLine, PiecewiseLinear };
  Kind kind = Kind::StraightLine;
  std::vector<double> baseline;
  std::vector<double> input;
  std::vector<std::vector<double>> waypoints;
  std::size_t steps = kDefaultSteps;

  static PathSpec straight(std::vector<double> baseline, std::vector<double> input,
                           std::size_t steps = kDefaultSteps) {
    return {Kind::StraightLine, std::move(baseline), std::move(input), {}, steps};
  }
  static PathSpec piecewise(std::vector<double> baseline, std::vector<std::vector<double>> waypoints,
                            std::vector<double> input, std::size_t steps = kDefaultSteps) {
    return {Kind::PiecewiseLinear, std::move(baseline), std::move(input), std::move(waypoints), steps};
  }

  std::vector<std::vector<double>> nodes() const {
    std::vector<std::vector<double>> out{baseline};
    if (kind == Kind::PiecewiseLinear) out.insert(out.end(), waypoints.begin(), waypoints.end());
    out.push_back(input);
    return out;
  }

  void validate(std::size_t dim) const {
    if (steps < 1) throw ValidationError("path: steps must be at least 1");
    for (const auto& p : nodes()) {
      if (p.size() != dim) throw ValidationError("path: point dimension does not match the function");
      for (double v : p)
        if (!std::isfinite(v)) throw ValidationError("path: points must be finite");
    }
  }
};

struct Attribution {
  std::vector<double> scores;
  double sum() const {
    double acc = 0.0;
    for (double v : scores) acc += v;
    return acc;
  }
  bool operator==(const Attribution&) const = default;
};

inline Attribution path_attribute(const DifferentiableFn& f, const PathSpec& path) {
  path.validate(f.dim());
  const std::size_t n = f.dim();
  const auto nodes = path.nodes();
  const std::size_t segments = nodes.size() - 1;
  Attribution out{std::vector<double>(n, 0.0)};
  std::vector<double> point(n), displacement(n), grad_sum(n);
  for (std::size_t s = 0; s < segments; ++s) {
    const auto& from = nodes[s];
    for (std::size_t i = 0; i < n; ++i) displacement[i] = nodes[s + 1][i] - from[i];
    std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
    for (std::size_t k = 0; k < path.steps; ++k) {
      const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(path.steps);
      for (std::size_t i = 0; i < n; ++i) point[i] = from[i] + t * displacement[i];
      const auto g = f.gradient(point);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(g[i])) {
          const double global_t = (static_cast<double>(s) + t) / static_cast<double>(segments);
          throw NumericError("non-finite gradient along path at t=" + format_double(global_t));
        }
        grad_sum[i] += g[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      out.scores[i] += displacement[i] * (grad_sum[i] / static_cast<double>(path.steps));
  }
  return out;
}

enum class Axiom { Specificity, Additivity, Completeness, BaselineInvariance };
enum class Verdict { Holds, Violated, PreconditionUnmet };

inline const char* to_string(Axiom a) {
  switch (a) {
    case Axiom::Specificity: return "specificity";
    case Axiom::Additivity: return "additivity";
    case Axiom::Completeness: return "completeness";
    case Axiom::BaselineInvariance: return "baseline_invariance";
  }
  return "?";
}

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Holds: return "holds";
    case Verdict::Violated: return "violated";
    case Verdict::PreconditionUnmet: return "precondition_unmet";
  }
  return "?";
}

// The inputs needed to re-run a checker on a single instance.
struct Witness {
  std::vector<double> input;
  std::vector<double> baseline;
  std::vector<double> baseline2;  // baseline invariance only
  std::size_t i = 0;
  std::size_t j = 0;
  double delta = 0.0;  // specificity precondition probes
  Attribution first;
  Attribution second;
};

struct AxiomReport {
  Axiom axiom = Axiom::Completeness;
  Verdict verdict = Verdict::Holds;
  double max_deviation = 0.0;
  std::optional<Witness> witness;
  std::string detail;
};

inline constexpr double kSpecificityTolerance = 1e-8;
inline constexpr double kDeadDimensionTolerance = 1e-9;
inline constexpr double kBaselineValueTolerance = 1e-9;

namespace detail {

inline std::vector<double> random_point(Rng& rng, std::size_t n, double radius = 2.0) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-radius, radius);
  return x;
}

}  // namespace detail

// Fuzz-verifies that F ignores every dead dimension, then checks that the
// straight-line attribution of those dimensions is zero on random pairs.
inline AxiomReport check_specificity(const DifferentiableFn& f, std::span<const std::size_t> dead_dims,
                                     std::size_t probes, std::uint64_t seed, std::size_t steps = kDefaultSteps) {
  AxiomReport report;
  report.axiom = Axiom::Specificity;
  for (std::size_t d : dead_dims)
    if (d >= f.dim()) throw ValidationError("specificity: dead dimension out of range");
  Rng rng(seed);
  for (std::size_t p = 0; p < probes; ++p) {
    const auto x = detail::random_point(rng, f.dim());
    const double fx = f.value(x);
    for (std::size_t d : dead_dims) {
      auto moved = x;
      const double delta = rng.uniform(-10.0, 10.0);
      moved[d] += delta;
      const double change = std::fabs(f.value(moved) - fx);
      if (change > kDeadDimensionTolerance) {
        report.verdict = Verdict::PreconditionUnmet;
        report.max_deviation = change;
        Witness w;
        w.input = x;
        w.i = d;
        w.delta = delta;
        report.witness = std::move(w);
        report.detail = "function changes along claimed dead dimension " + std::to_string(d);
        return report;
      }
    }
  }
  for (std::size_t p = 0; p < probes; ++p) {
    auto x = detail::random_point(rng, f.dim());
    auto base = detail::random_point(rng, f.dim());
    const Attribution a = path_attribute(f, PathSpec::straight(base, x, steps));
    for (std::size_t d : dead_dims) {
      const double dev = std::fabs(a.scores[d]);
      report.max_deviation = std::max(report.max_deviation, dev);
      if (dev > kSpecificityTolerance && report.verdict == Verdict::Holds) {
        report.verdict = Verdict::Violated;
        Witness w;
        w.input = x;
        w.baseline = base;
        w.i = d;
        w.first = a;
        report.witness = std::move(w);
      }
    }
  }
  return report;
}

inline AxiomReport check_additivity(const DifferentiableFn& f1, const DifferentiableFn& f2,
                                    const std::vector<double>& x, const std::vector<double>& baseline,
                                    double tolerance, std::size_t steps = kDefaultSteps) {
  if (f1.dim() != f2.dim()) throw ValidationError("additivity: dimension mismatch");
  const PathSpec path = PathSpec::straight(baseline, x, steps);
  const Attribution joint = path_attribute(f1 + f2, path);
  const Attribution a1 = path_attribute(f1, path);
  const Attribution a2 = path_attribute(f2, path);
  AxiomReport report;
  report.axiom = Axiom::Additivity;
  for (std::size_t i = 0; i < f1.dim(); ++i)
    report.max_deviation = std::max(report.max_deviation, std::fabs(joint.scores[i] - a1.scores[i] - a2.scores[i]));
  if (report.max_deviation > tolerance) {
    report.verdict = Verdict::Violated;
    Witness w;
    w.input = x;
    w.baseline = baseline;
    w.first = joint;
    Attribution sum = a1;
    for (std::size_t i = 0; i < sum.scores.size(); ++i) sum.scores[i] += a2.scores[i];
    w.second = sum;
    report.witness = std::move(w);
  }
  return report;
}

inline AxiomReport check_completeness(const DifferentiableFn& f, const std::vector<double>& x,
                                      const std::vector<double>& baseline, std::size_t steps, double tolerance) {
  const Attribution a = path_attribute(f, PathSpec::straight(baseline, x, steps));
  const double delta_f = f.value(x) - f.value(baseline);
  AxiomReport report;
  report.axiom = Axiom::Completeness;
  report.max_deviation = std::fabs(a.sum() - delta_f);
  if (report.max_deviation > tolerance) {
    report.verdict = Verdict::Violated;
    Witness w;
    w.input = x;
    w.baseline = baseline;
    w.first = a;
    report.witness = std::move(w);
  }
  return report;
}

// Violated iff some pair (i, j) is strictly ordered one way under the first
// baseline and strictly the other way under the second. Ties never count.
inline AxiomReport check_baseline_invariance(const DifferentiableFn& f, const std::vector<double>& x,
                                             const std::vector<double>& baseline1,
                                             const std::vector<double>& baseline2,
                                             std::size_t steps = kDefaultSteps) {
  const double gap = std::fabs(f.value(baseline1) - f.value(baseline2));
  if (gap > kBaselineValueTolerance)
    throw PreconditionError("baseline invariance: F differs on the two baselines by " + format_double(gap));
  const Attribution a1 = path_attribute(f, PathSpec::straight(baseline1, x, steps));
  const Attribution a2 = path_attribute(f, PathSpec::straight(baseline2, x, steps));
  AxiomReport report;
  report.axiom = Axiom::BaselineInvariance;
  const std::size_t n = f.dim();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d1 = a1.scores[i] - a1.scores[j];
      const double d2 = a2.scores[i] - a2.scores[j];
      if ((d1 < 0.0 && d2 > 0.0) || (d1 > 0.0 && d2 < 0.0)) {
        report.max_deviation = std::max(report.max_deviation, std::min(std::fabs(d1), std::fabs(d2)));
        if (report.verdict == Verdict::Holds) {
          report.verdict = Verdict::Violated;
          report.witness = Witness{x, baseline1, baseline2, i, j, 0.0, a1, a2};
        }
      }
    }
  return report;
}

// Search for a point whose F value equals F(reference) within the baseline
// tolerance: bisection between two random points straddling the level set.
inline std::optional<std::vector<double>> find_equal_value_point(const DifferentiableFn& f,
                                                                 const std::vector<double>& reference, Rng& rng,
                                                                 int attempts = 64) {
  const double level = f.value(reference);
  for (int a = 0; a < attempts; ++a) {
    auto lo = detail::random_point(rng, f.dim());
    auto hi = detail::random_point(rng, f.dim());
    double flo = f.value(lo) - level;
    const double fhi = f.value(hi) - level;
    if (flo == 0.0) return lo;
    if ((flo < 0.0) == (fhi < 0.0)) continue;
    for (int it = 0; it < 200; ++it) {
      std::vector<double> mid(f.dim());
      for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (lo[i] + hi[i]);
      const double fm = f.value(mid) - level;
      if (std::fabs(fm) <= kBaselineValueTolerance / 10) return mid;
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// The impossibility instance: F(x) = x1 - x2, x = (1, 0), baselines
// (-1, -1) and (1, 1). Attributions are (2, -1) and (0, 1); their ranks
// swap although F agrees on both baselines.

struct Theorem1Report {
  Attribution from_first;
  Attribution from_second;
  double f_input = 0.0;
  double f_first = 0.0;
  double f_second = 0.0;
  AxiomReport completeness_first;
  AxiomReport completeness_second;
  AxiomReport additivity;
  AxiomReport specificity;
  AxiomReport baseline_invariance;
  std::string text;
};

namespace detail {

inline std::string tuple_text(std::span<const double> v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out + ")";
}

}  // namespace detail

inline Theorem1Report theorem1_demo(std::size_t steps = kDefaultSteps) {
  const auto f = DifferentiableFn::affine({1.0, -1.0});
  const std::vector<double> x{1.0, 0.0};
  const std::vector<double> base1{-1.0, -1.0};
  const std::vector<double> base2{1.0, 1.0};
  Theorem1Report r;
  r.from_first = path_attribute(f, PathSpec::straight(base1, x, steps));
  r.from_second = path_attribute(f, PathSpec::straight(base2, x, steps));
  r.f_input = f.value(x);
  r.f_first = f.value(base1);
  r.f_second = f.value(base2);
  if (r.from_first.scores != std::vector<double>{2.0, -1.0} || r.from_second.scores != std::vector<double>{0.0, 1.0})
    throw ImplementationDefect("path attribution of x1 - x2 does not reproduce (2,-1) and (0,1)");
  r.completeness_first = check_completeness(f, x, base1, steps, 1e-12);
  r.completeness_second = check_completeness(f, x, base2, steps, 1e-12);
  r.additivity = check_additivity(DifferentiableFn::affine({1.0, 0.0}), DifferentiableFn::affine({0.0, -1.0}), x,
                                  base1, 1e-12, steps);
  // x3 is a dummy input of the same function.
  const std::vector<std::size_t> dead{2};
  r.specificity = check_specificity(DifferentiableFn::affine({1.0, -1.0, 0.0}), dead, 8, 1, steps);
  r.baseline_invariance = check_baseline_invariance(f, x, base1, base2, steps);
  if (r.completeness_first.verdict != Verdict::Holds || r.completeness_second.verdict != Verdict::Holds ||
      r.additivity.verdict != Verdict::Holds || r.specificity.verdict != Verdict::Holds)
    throw ImplementationDefect("path method failed an axiom it satisfies by construction");
  if (r.baseline_invariance.verdict != Verdict::Violated || !r.baseline_invariance.witness ||
      r.baseline_invariance.witness->i != 0 || r.baseline_invariance.witness->j != 1)
    throw ImplementationDefect("baseline invariance was not violated on the counterexample");

  using detail::tuple_text;
  std::ostringstream out;
  out << "function=x1-x2\n"
      << "input=" << tuple_text(x) << "\n"
      << "baseline1=" << tuple_text(base1) << "\n"
      << "attribution1=" << tuple_text(r.from_first.scores) << "\n"
      << "baseline2=" << tuple_text(base2) << "\n"
      << "attribution2=" << tuple_text(r.from_second.scores) << "\n"
      << "F(input)=" << format_double(r.f_input) << "\n"
      << "F(baseline1)=" << format_double(r.f_first) << "\n"
      << "F(baseline2)=" << format_double(r.f_second) << "\n"
      << "completeness1=" << to_string(r.completeness_first.verdict) << " sum=" << format_double(r.from_first.sum())
      << " delta=" << format_double(r.f_input - r.f_first) << "\n"
      << "completeness2=" << to_string(r.completeness_second.verdict) << " sum=" << format_double(r.from_second.sum())
      << " delta=" << format_double(r.f_input - r.f_second) << "\n"
      << "additivity=" << to_string(r.additivity.verdict) << " f1=x1 f2=-x2\n"
      << "specificity=" << to_string(r.specificity.verdict) << " dummy=x3\n"
      << "baseline_invariance=" << to_string(r.baseline_invariance.verdict) << " i=1 j=2 rank1=(2>-1) rank2=(0<1)\n"
      << "verdict=baseline invariance violated; no attribution satisfies specificity, additivity, completeness "
         "and baseline invariance together\n";
  r.text = out.str();
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps over models and random (input, baseline) pairs.

// Small MLP with non-trivial biases; inputs listed in `dead` are gated off.
inline MlpModel random_mlp(std::uint64_t seed, std::size_t inputs, std::span<const std::size_t> dead = {}) {
  MlpConfig cfg;
  cfg.input_dim = inputs;
  cfg.hidden1 = 8;
  cfg.hidden2 = 5;
  cfg.seed = seed;
  MlpModel m = init_mlp(cfg);
  Rng rng(Rng::mix(seed, 1));
  for (auto* layer : {&m.layer1, &m.layer2, &m.head}) {
    for (auto& w : layer->weight) w *= 2.0;
    for (auto& b : layer->bias) b = rng.uniform(-0.5, 0.5);
  }
  for (std::size_t d : dead) {
    if (d >= inputs) throw ValidationError("random_mlp: dead input out of range");
    m.input_mask.theta[d] = -1.0;
  }
  return m;
}

struct SweepConfig {
  std::size_t pairs = 10;
  std::size_t steps = 4096;
  double completeness_tolerance = 1e-3;
  double additivity_tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct SweepRow {
  Axiom axiom = Axiom::Completeness;
  std::size_t checks = 0;
  std::size_t holds = 0;
  std::size_t violated = 0;
  std::size_t precondition_unmet = 0;
  double max_deviation = 0.0;

  void add(const AxiomReport& r) {
    ++checks;
    if (r.verdict == Verdict::Holds) ++holds;
    if (r.verdict == Verdict::Violated) ++violated;
    if (r.verdict == Verdict::PreconditionUnmet) ++precondition_unmet;
    max_deviation = std::max(max_deviation, r.max_deviation);
  }
};

// Completeness and additivity (model k paired with model k+1) on random
// pairs, and specificity on every input whose hard gate is off.
inline std::vector<SweepRow> axiom_sweep(std::span<const MlpModel> models, const SweepConfig& cfg) {
  if (models.empty()) throw ValidationError("axiom sweep: no models");
  SweepRow completeness{Axiom::Completeness}, additivity{Axiom::Additivity}, specificity{Axiom::Specificity};
  Rng rng(cfg.seed);
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& m = models[k];
    const auto& partner = models[(k + 1) % models.size()];
    const auto f = DifferentiableFn::mlp(m);
    const bool pairable = partner.input_dim() == m.input_dim();
    const auto g = DifferentiableFn::mlp(pairable ? partner : m);
    std::vector<std::size_t> dead;
    for (std::size_t i = 0; i < m.input_dim(); ++i)
      if (!m.input_mask.on(i)) dead.push_back(i);
    for (std::size_t p = 0; p < cfg.pairs; ++p) {
      const auto x = detail::random_point(rng, m.input_dim());
      const auto base = detail::random_point(rng, m.input_dim());
      completeness.add(check_completeness(f, x, base, cfg.steps, cfg.completeness_tolerance));
      additivity.add(check_additivity(f, g, x, base, cfg.additivity_tolerance, cfg.steps));
    }
    if (!dead.empty()) specificity.add(check_specificity(f, dead, cfg.pairs, rng.next_u64(), cfg.steps));
  }
  return {completeness, additivity, specificity};
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axiom,checks,holds,violated,precondition_unmet,max_deviation\n";
  for (const auto& r : rows)
    out += std::string(to_string(r.axiom)) + "," + std::to_string(r.checks) + "," + std::to_string(r.holds) + "," +
           std::to_string(r.violated) + "," + std::to_string(r.precondition_unmet) + "," +
           format_double(r.max_deviation) + "\n";
  return out;
}

}  // namespace soundexpl
