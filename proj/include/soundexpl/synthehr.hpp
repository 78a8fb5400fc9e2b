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

// Synthetic EHR-like cohorts with planted risk codes, the data-quality and
// code-prevalence filters, cutoff sampling and fixed-length feature
// derivation.
//
// Days are integer indices from an epoch at the start of kEpochYear. A year
// is 365 days and a month 30 days throughout. Every patient is observed on
// [0, window_days), truncated at death.

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "soundexpl/error.hpp"
#include "soundexpl/rng.hpp"
#include "soundexpl/sparse.hpp"

namespace soundexpl {

inline constexpr int kEpochYear = 2000;
inline constexpr double kDaysPerYear = 365.0;
inline constexpr int kDaysPerMonth = 30;
inline constexpr int kMinCutoffOffset = 6 * kDaysPerMonth;    // 180
inline constexpr int kMaxCutoffOffset = 18 * kDaysPerMonth;   // 540
inline constexpr int kDeathGraceDays = 2 * kDaysPerMonth;     // 60

enum class EventKind : std::uint8_t { Diag, Med, Lab };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Diag: return "diag";
    case EventKind::Med: return "med";
    case EventKind::Lab: return "lab";
  }
  return "?";
}

inline EventKind event_kind_from(const std::string& s) {
  if (s == "diag") return EventKind::Diag;
  if (s == "med") return EventKind::Med;
  if (s == "lab") return EventKind::Lab;
  throw ValidationError("unknown event kind '" + s + "'");
}

struct CodeRef {
  EventKind kind = EventKind::Diag;
  std::uint32_t code = 0;
  auto operator<=>(const CodeRef&) const = default;
  std::string name() const { return std::string(to_string(kind)) + ":" + std::to_string(code); }
};

struct Event {
  int day = 0;
  EventKind kind = EventKind::Diag;
  std::uint32_t code = 0;
  std::optional<double> lab_value;  // present iff kind == Lab
  CodeRef ref() const { return {kind, code}; }
  bool operator==(const Event&) const = default;
};

struct Patient {
  std::uint64_t id = 0;
  int sex = 0;
  int birth_year = 0;
  std::optional<int> death_day;
  std::vector<Event> events;  // sorted by day
  bool operator==(const Patient&) const = default;

  int birth_day() const { return (birth_year - kEpochYear) * static_cast<int>(kDaysPerYear); }
};

struct PlantedCode {
  CodeRef code;
  double hazard = 0.0;  // pre-diagnosis rate multiplier for positives is 1 + hazard
  bool operator==(const PlantedCode&) const = default;
};

struct CohortConfig {
  std::size_t n_positive = 1000;
  std::size_t n_negative = 4000;
  std::size_t n_diag = 24;
  std::size_t n_med = 10;
  std::size_t n_lab = 3;
  std::size_t n_planted = 10;
  double planted_hazard = 3.0;
  std::vector<PlantedCode> planted;  // explicit planted codes; drawn at random when empty
  double target_sparsity = 0.94;
  int window_days = 6 * 365;
  double rate_spread = 0.5;       // log-normal spread of background rates across codes
  double death_fraction = 0.05;
  double late_event_fraction = 0.3;  // of deceased patients: erroneous event after death + 60
  int min_birth_year = 1930;
  int max_birth_year = 1975;
  std::uint64_t seed = 0;

  std::size_t vocabulary_size() const { return n_diag + n_med + n_lab; }
  // Earliest diagnosis day: one year of history before the earliest cutoff.
  int min_diagnosis_day() const { return kMaxCutoffOffset + 365; }

  void validate() const {
    auto fail = [](const std::string& s) { throw ValidationError("cohort config: " + s); };
    if (n_positive == 0 || n_negative == 0) fail("class counts must be positive");
    if (vocabulary_size() == 0) fail("empty code vocabulary");
    if (!(target_sparsity > 0.0 && target_sparsity < 1.0)) fail("sparsity must be in (0, 1)");
    if (planted.empty() && (n_planted == 0 || n_planted > vocabulary_size()))
      fail("need between 1 and vocabulary-size planted codes");
    for (const auto& p : planted) {
      const std::size_t limit = p.code.kind == EventKind::Diag ? n_diag : p.code.kind == EventKind::Med ? n_med : n_lab;
      if (p.code.code >= limit) fail("planted code " + p.code.name() + " is not in the vocabulary");
      if (p.hazard < 0.0) fail("hazards must be non-negative");
    }
    if (planted_hazard < 0.0) fail("hazards must be non-negative");
    if (window_days <= min_diagnosis_day() + 30) fail("observation window too short");
    if (min_birth_year > max_birth_year) fail("birth year range is empty");
    if (rate_spread < 0.0 || death_fraction < 0.0 || death_fraction > 1.0 || late_event_fraction < 0.0 ||
        late_event_fraction > 1.0)
      fail("rates and fractions out of range");
  }
};

struct Cohort {
  std::vector<Patient> patients;
  std::vector<int> labels;
  std::vector<std::optional<int>> diagnosis_day;
  std::vector<PlantedCode> ground_truth;
  int window_days = 6 * 365;
};

// ---------------------------------------------------------------------------
// Feature layout.

enum class Derived : std::uint8_t { E, FD, LD, P, F, V, VE, S, SE };

inline const char* to_string(Derived d) {
  switch (d) {
    case Derived::E: return "e";
    case Derived::FD: return "fd";
    case Derived::LD: return "ld";
    case Derived::P: return "p";
    case Derived::F: return "f";
    case Derived::V: return "v";
    case Derived::VE: return "ve";
    case Derived::S: return "s";
    case Derived::SE: return "se";
  }
  return "?";
}

inline constexpr std::size_t kGlobalColumns = 3;  // age, sex, encounter_frequency
inline constexpr std::size_t kCodeColumns = 5;    // e fd ld p f
inline constexpr std::size_t kLabColumns = 9;     // + v ve s se

struct FeatureColumn {
  enum class Source : std::uint8_t { Age, Sex, EncounterFrequency, Code };
  Source source = Source::Code;
  CodeRef code;
  Derived type = Derived::E;
  std::string name;
};

// Column layout: age, sex, encounter_frequency, then per vocabulary code
// (in the given order) e, fd, ld, p, f and for labs v, ve, s, se.
class FeatureSpec {
 public:
  FeatureSpec() = default;
  explicit FeatureSpec(std::vector<CodeRef> vocabulary) : vocabulary_(std::move(vocabulary)) {
    columns_.push_back({FeatureColumn::Source::Age, {}, Derived::E, "age"});
    columns_.push_back({FeatureColumn::Source::Sex, {}, Derived::E, "sex"});
    columns_.push_back({FeatureColumn::Source::EncounterFrequency, {}, Derived::E, "encounter_frequency"});
    for (const auto& c : vocabulary_) {
      if (base_.count(c)) throw ValidationError("vocabulary repeats " + c.name());
      base_[c] = columns_.size();
      const std::size_t k = c.kind == EventKind::Lab ? kLabColumns : kCodeColumns;
      for (std::size_t t = 0; t < k; ++t) {
        const auto d = static_cast<Derived>(t);
        columns_.push_back({FeatureColumn::Source::Code, c, d, c.name() + "[" + to_string(d) + "]"});
      }
    }
  }

  const std::vector<CodeRef>& vocabulary() const { return vocabulary_; }
  const std::vector<FeatureColumn>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  std::optional<std::size_t> base_column(const CodeRef& c) const {
    const auto it = base_.find(c);
    if (it == base_.end()) return std::nullopt;
    return it->second;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
  }
  // All columns derived from `code`.
  std::vector<std::size_t> columns_of(const CodeRef& c) const {
    std::vector<std::size_t> out;
    if (const auto b = base_column(c)) {
      const std::size_t k = c.kind == EventKind::Lab ? kLabColumns : kCodeColumns;
      for (std::size_t t = 0; t < k; ++t) out.push_back(*b + t);
    }
    return out;
  }

 private:
  std::vector<CodeRef> vocabulary_;
  std::vector<FeatureColumn> columns_;
  std::map<CodeRef, std::size_t> base_;
};

// Least-squares slope of value against day; nullopt with fewer than two
// points or no spread in days.
inline std::optional<double> least_squares_slope(std::span<const std::pair<int, double>> points) {
  if (points.size() < 2) return std::nullopt;
  double mean_d = 0.0, mean_v = 0.0;
  for (const auto& [d, v] : points) {
    mean_d += d;
    mean_v += v;
  }
  mean_d /= static_cast<double>(points.size());
  mean_v /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [d, v] : points) {
    sxy += (d - mean_d) * (v - mean_v);
    sxx += (d - mean_d) * (d - mean_d);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

// Only events strictly before `cutoff` contribute. Missing data is encoded
// as zeros with a zero existence flag.
inline SparseRow derive_features(const Patient& patient, int cutoff, const FeatureSpec& spec) {
  struct Acc {
    std::size_t count = 0;
    int first = 0;
    int last = 0;
    std::vector<std::pair<int, double>> values;
  };
  std::map<std::size_t, Acc> per_code;  // keyed by base column
  std::vector<int> days;
  for (const auto& e : patient.events) {
    if (e.day >= cutoff) continue;
    days.push_back(e.day);
    const auto base = spec.base_column(e.ref());
    if (!base) continue;
    Acc& a = per_code[*base];
    a.first = a.count == 0 ? e.day : std::min(a.first, e.day);
    a.last = a.count == 0 ? e.day : std::max(a.last, e.day);
    ++a.count;
    if (e.kind == EventKind::Lab && e.lab_value) a.values.emplace_back(e.day, *e.lab_value);
  }
  std::sort(days.begin(), days.end());
  const auto distinct_days = static_cast<double>(std::unique(days.begin(), days.end()) - days.begin());

  SparseRow row;
  auto put = [&](std::size_t col, double v) {
    if (v != 0.0) row.push_back({col, v});
  };
  put(0, (cutoff - patient.birth_day()) / kDaysPerYear);
  put(1, static_cast<double>(patient.sex));
  put(2, cutoff > 0 ? distinct_days / (cutoff / kDaysPerYear) : 0.0);
  for (auto& [base, a] : per_code) {
    put(base + 0, 1.0);
    put(base + 1, (cutoff - a.first) / kDaysPerYear);
    put(base + 2, (cutoff - a.last) / kDaysPerYear);
    put(base + 3, (a.last - a.first) / kDaysPerYear);
    put(base + 4, static_cast<double>(a.count));
    if (spec.columns()[base].code.kind != EventKind::Lab || a.values.empty()) continue;
    // Events are day-sorted, so the latest value is the last one seen.
    put(base + 5, a.values.back().second);
    put(base + 6, 1.0);
    if (const auto s = least_squares_slope(a.values)) {
      put(base + 7, *s);
      put(base + 8, 1.0);
    }
  }
  return row;
}

struct FeatureMatrix {
  SparseMatrix matrix;
  std::vector<std::string> names;
};

inline FeatureMatrix build_matrix(const Cohort& cohort, std::span<const int> cutoffs, const FeatureSpec& spec) {
  if (cutoffs.size() != cohort.patients.size())
    throw ValidationError("build_matrix: one cutoff per patient required");
  FeatureMatrix out{SparseMatrix(spec.size()), spec.names()};
  for (std::size_t i = 0; i < cohort.patients.size(); ++i)
    out.matrix.append_row(derive_features(cohort.patients[i], cutoffs[i], spec));
  return out;
}

// ---------------------------------------------------------------------------
// Filters.

// Indices of patients without events more than 60 days after death.
inline std::vector<std::size_t> quality_keep(std::span<const Patient> patients) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto& p = patients[i];
    const bool late = p.death_day && std::any_of(p.events.begin(), p.events.end(), [&](const Event& e) {
                        return e.day > *p.death_day + kDeathGraceDays;
                      });
    if (!late) keep.push_back(i);
  }
  return keep;
}

inline std::vector<Patient> quality_filter(std::span<const Patient> patients) {
  std::vector<Patient> out;
  for (std::size_t i : quality_keep(patients)) out.push_back(patients[i]);
  return out;
}

inline Cohort quality_filter(const Cohort& cohort) {
  Cohort out;
  out.ground_truth = cohort.ground_truth;
  out.window_days = cohort.window_days;
  for (std::size_t i : quality_keep(cohort.patients)) {
    out.patients.push_back(cohort.patients[i]);
    out.labels.push_back(cohort.labels[i]);
    out.diagnosis_day.push_back(cohort.diagnosis_day[i]);
  }
  return out;
}

// Codes with any event in at least 1% of positive patients (inclusive).
// `rows` restricts the patients considered (all when empty).
inline std::vector<CodeRef> filter_codes(const Cohort& cohort, std::span<const std::size_t> rows = {}) {
  std::map<CodeRef, std::size_t> holders;
  std::size_t positives = 0;
  auto visit = [&](std::size_t i) {
    if (cohort.labels[i] != 1) return;
    ++positives;
    std::vector<CodeRef> seen;
    for (const auto& e : cohort.patients[i].events) seen.push_back(e.ref());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (const auto& c : seen) ++holders[c];
  };
  if (rows.empty()) {
    for (std::size_t i = 0; i < cohort.patients.size(); ++i) visit(i);
  } else {
    for (std::size_t i : rows) visit(i);
  }
  if (positives == 0) throw ValidationError("filter_codes: no positive patients");
  std::vector<CodeRef> keep;
  for (const auto& [code, n] : holders)
    if (n * 100 >= positives) keep.push_back(code);
  return keep;
}

// ---------------------------------------------------------------------------
// Cutoffs.

// Positives: diagnosis day minus a uniform 180..540 day offset. Negatives:
// a draw from the same mixture over positive diagnosis days, clamped into
// the patient's observation window.
class CutoffSampler {
 public:
  CutoffSampler(std::vector<int> positive_diagnosis_days, int window_days)
      : diagnosis_days_(std::move(positive_diagnosis_days)), window_days_(window_days) {
    if (diagnosis_days_.empty()) throw ValidationError("cutoff sampler: no positive diagnosis dates");
  }

  static CutoffSampler from_cohort(const Cohort& cohort, std::span<const std::size_t> rows = {}) {
    std::vector<int> days;
    auto add = [&](std::size_t i) {
      if (cohort.labels[i] == 1 && cohort.diagnosis_day[i]) days.push_back(*cohort.diagnosis_day[i]);
    };
    if (rows.empty()) {
      for (std::size_t i = 0; i < cohort.patients.size(); ++i) add(i);
    } else {
      for (std::size_t i : rows) add(i);
    }
    return CutoffSampler(std::move(days), cohort.window_days);
  }

  int sample(const Patient& patient, int label, std::optional<int> diagnosis_day, Rng& rng) const {
    if (label == 1) {
      if (!diagnosis_day) throw ValidationError("positive patient " + std::to_string(patient.id) + " has no diagnosis date");
      return *diagnosis_day - static_cast<int>(rng.uniform_int(kMinCutoffOffset, kMaxCutoffOffset));
    }
    const int diag = diagnosis_days_[rng.index(diagnosis_days_.size())];
    const int drawn = diag - static_cast<int>(rng.uniform_int(kMinCutoffOffset, kMaxCutoffOffset));
    const int end = patient.death_day ? std::min(*patient.death_day, window_days_) : window_days_;
    return std::clamp(drawn, 1, std::max(1, end - 1));
  }

  const std::vector<int>& diagnosis_days() const { return diagnosis_days_; }

 private:
  std::vector<int> diagnosis_days_;
  int window_days_;
};

inline int sample_cutoff(const Patient& patient, int label, std::optional<int> diagnosis_day,
                         const CutoffSampler& sampler, Rng& rng) {
  return sampler.sample(patient, label, diagnosis_day, rng);
}

inline std::vector<int> sample_cutoffs(const Cohort& cohort, const CutoffSampler& sampler, Rng& rng) {
  std::vector<int> out(cohort.patients.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = sampler.sample(cohort.patients[i], cohort.labels[i], cohort.diagnosis_day[i], rng);
  return out;
}

// ---------------------------------------------------------------------------
// Generation.

namespace detail {

struct CodeModel {
  CodeRef code;
  double rate_multiplier = 1.0;
  double hazard = 0.0;
  double lab_mean = 0.0;
};

// Expected fraction of nonzero cells for background rate `rate` (events
// per day), averaged over a grid of pre-cutoff history lengths.
inline double expected_density(const CohortConfig& cfg, const std::vector<CodeModel>& codes, double rate) {
  const double pos_frac = static_cast<double>(cfg.n_positive) / static_cast<double>(cfg.n_positive + cfg.n_negative);
  const int grid = 12;
  const double lo = cfg.min_diagnosis_day(), hi = cfg.window_days - 1;
  double cells = kGlobalColumns;
  for (const auto& c : codes) cells += c.code.kind == EventKind::Lab ? kLabColumns : kCodeColumns;
  double nonzero = 0.0;
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const double diag = lo + (hi - lo) * (a + 0.5) / grid;
      const double off = kMinCutoffOffset + (kMaxCutoffOffset - kMinCutoffOffset) * (b + 0.5) / grid;
      const double length = diag - off;
      for (int cls = 0; cls < 2; ++cls) {
        const double weight = (cls == 1 ? pos_frac : 1.0 - pos_frac) / (grid * grid);
        double total_mu = 0.0;
        double cell_sum = 1.0 + 0.5;  // age, sex
        for (const auto& c : codes) {
          const double mu = rate * c.rate_multiplier * length * (cls == 1 ? 1.0 + c.hazard : 1.0);
          total_mu += mu;
          const double p1 = 1.0 - std::exp(-mu);
          const double p2 = 1.0 - std::exp(-mu) * (1.0 + mu);
          cell_sum += c.code.kind == EventKind::Lab ? 6.0 * p1 + 3.0 * p2 : 4.0 * p1 + p2;
        }
        cell_sum += 1.0 - std::exp(-total_mu);
        nonzero += weight * cell_sum;
      }
    }
  return nonzero / cells;
}

inline void add_events(Rng& rng, std::vector<Event>& events, const CodeModel& c, double rate, int from, int to,
                       double value_shift) {
  if (to <= from) return;
  const auto n = rng.poisson(rate * (to - from));
  for (std::int64_t k = 0; k < n; ++k) {
    Event e;
    e.day = static_cast<int>(rng.uniform_int(from, to - 1));
    e.kind = c.code.kind;
    e.code = c.code.code;
    if (c.code.kind == EventKind::Lab)
      e.lab_value = std::max(0.01, rng.normal(c.lab_mean * (1.0 + value_shift), 0.15 * c.lab_mean));
    events.push_back(e);
  }
}

}  // namespace detail

// Background events are per-code Poisson processes over the observed
// window; positives get planted codes at rate multiplied by (1 + hazard)
// before diagnosis. The background rate is solved so that the expected
// derived-matrix sparsity matches the target.
inline Cohort generate_cohort(const CohortConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<detail::CodeModel> codes;
  auto add_kind = [&](EventKind kind, std::size_t n) {
    for (std::uint32_t i = 0; i < n; ++i) codes.push_back({{kind, i}, 1.0, 0.0, 0.0});
  };
  add_kind(EventKind::Diag, cfg.n_diag);
  add_kind(EventKind::Med, cfg.n_med);
  add_kind(EventKind::Lab, cfg.n_lab);
  double mean_mult = 0.0;
  for (auto& c : codes) {
    c.rate_multiplier = std::exp(cfg.rate_spread * rng.normal());
    mean_mult += c.rate_multiplier;
    if (c.code.kind == EventKind::Lab) c.lab_mean = rng.uniform(1.0, 10.0);
  }
  mean_mult /= static_cast<double>(codes.size());
  for (auto& c : codes) c.rate_multiplier /= mean_mult;

  std::vector<PlantedCode> planted = cfg.planted;
  if (planted.empty()) {
    std::vector<std::size_t> idx(codes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < cfg.n_planted; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    for (std::size_t i = 0; i < cfg.n_planted; ++i) planted.push_back({codes[idx[i]].code, cfg.planted_hazard});
    std::sort(planted.begin(), planted.end(), [](const auto& a, const auto& b) { return a.code < b.code; });
  }
  for (const auto& p : planted)
    for (auto& c : codes)
      if (c.code == p.code) c.hazard = p.hazard;

  const double target = 1.0 - cfg.target_sparsity;
  const double low_rate = 0.0, high_rate = 1.0;
  if (detail::expected_density(cfg, codes, low_rate) > target ||
      detail::expected_density(cfg, codes, high_rate) < target)
    throw ValidationError("cohort config: sparsity target " + format_double(cfg.target_sparsity) +
                          " is infeasible for this vocabulary");
  double lo = low_rate, hi = high_rate;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (detail::expected_density(cfg, codes, mid) < target ? lo : hi) = mid;
  }
  const double rate = 0.5 * (lo + hi);

  const std::size_t total = cfg.n_positive + cfg.n_negative;
  std::vector<int> labels(total, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(cfg.n_positive), 1);
  for (std::size_t i = total; i > 1; --i) std::swap(labels[i - 1], labels[rng.index(i)]);

  Cohort cohort;
  cohort.ground_truth = planted;
  cohort.window_days = cfg.window_days;
  const int window = cfg.window_days;
  for (std::size_t i = 0; i < total; ++i) {
    Patient p;
    p.id = i;
    p.sex = rng.bernoulli(0.5) ? 1 : 0;
    p.birth_year = static_cast<int>(rng.uniform_int(cfg.min_birth_year, cfg.max_birth_year));
    const int label = labels[i];
    std::optional<int> diag;
    if (label == 1) diag = static_cast<int>(rng.uniform_int(cfg.min_diagnosis_day(), window - 1));
    if (rng.bernoulli(cfg.death_fraction)) {
      const int earliest = std::max(window / 2, diag ? *diag + 1 : 0);
      if (earliest <= window - 1) p.death_day = static_cast<int>(rng.uniform_int(earliest, window - 1));
    }
    const int end = p.death_day ? *p.death_day + 1 : window;
    for (const auto& c : codes) {
      detail::add_events(rng, p.events, c, rate * c.rate_multiplier, 0, end, 0.0);
      if (label == 1 && c.hazard > 0.0)
        detail::add_events(rng, p.events, c, rate * c.rate_multiplier * c.hazard, 0, *diag, 0.1 * c.hazard);
    }
    if (p.death_day && rng.bernoulli(cfg.late_event_fraction)) {
      const auto& c = codes[rng.index(codes.size())];
      detail::add_events(rng, p.events, c, 1.0, *p.death_day + kDeathGraceDays + 1, *p.death_day + 366, 0.0);
    }
    std::stable_sort(p.events.begin(), p.events.end(), [](const Event& a, const Event& b) {
      return std::tie(a.day, a.kind, a.code) < std::tie(b.day, b.kind, b.code);
    });
    cohort.patients.push_back(std::move(p));
    cohort.labels.push_back(label);
    cohort.diagnosis_day.push_back(diag);
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Cohort file: one JSON object per patient per line.

inline std::string cohort_to_jsonl(const Cohort& cohort) {
  std::string out;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const auto& p = cohort.patients[i];
    nlohmann::json j;
    j["id"] = p.id;
    j["sex"] = p.sex;
    j["birth_year"] = p.birth_year;
    if (p.death_day) j["death_day"] = *p.death_day;
    auto events = nlohmann::json::array();
    for (const auto& e : p.events) {
      auto ev = nlohmann::json::array({e.day, to_string(e.kind), e.code});
      if (e.lab_value) ev.push_back(*e.lab_value);
      events.push_back(std::move(ev));
    }
    j["events"] = std::move(events);
    j["label"] = cohort.labels[i];
    if (cohort.diagnosis_day[i]) j["diagnosis_day"] = *cohort.diagnosis_day[i];
    out += j.dump() + "\n";
  }
  return out;
}

inline Cohort cohort_from_jsonl(const std::string& text, int window_days) {
  Cohort cohort;
  cohort.window_days = window_days;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Patient p;
      p.id = j.at("id").get<std::uint64_t>();
      p.sex = j.at("sex").get<int>();
      p.birth_year = j.at("birth_year").get<int>();
      if (j.contains("death_day")) p.death_day = j.at("death_day").get<int>();
      int last_day = std::numeric_limits<int>::min();
      for (const auto& ev : j.at("events")) {
        Event e;
        e.day = ev.at(0).get<int>();
        e.kind = event_kind_from(ev.at(1).get<std::string>());
        e.code = ev.at(2).get<std::uint32_t>();
        if (ev.size() > 3) e.lab_value = ev.at(3).get<double>();
        if ((e.kind == EventKind::Lab) != e.lab_value.has_value())
          throw ValidationError("lab value must be present exactly for lab events");
        if (e.day < last_day) throw ValidationError("events must be sorted by day");
        last_day = e.day;
        p.events.push_back(e);
      }
      const int label = j.at("label").get<int>();
      if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1");
      std::optional<int> diag;
      if (j.contains("diagnosis_day")) diag = j.at("diagnosis_day").get<int>();
      if (label == 1 && !diag) throw ValidationError("positive patient without diagnosis_day");
      cohort.patients.push_back(std::move(p));
      cohort.labels.push_back(label);
      cohort.diagnosis_day.push_back(diag);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("cohort line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("cohort line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cohort;
}

inline nlohmann::json cohort_config_to_json(const CohortConfig& c) {
  auto planted = nlohmann::json::array();
  for (const auto& p : c.planted) planted.push_back({{"code", p.code.name()}, {"hazard", p.hazard}});
  return {{"n_positive", c.n_positive},
          {"n_negative", c.n_negative},
          {"n_diag", c.n_diag},
          {"n_med", c.n_med},
          {"n_lab", c.n_lab},
          {"n_planted", c.n_planted},
          {"planted_hazard", c.planted_hazard},
          {"planted", planted},
          {"target_sparsity", c.target_sparsity},
          {"window_days", c.window_days},
          {"rate_spread", c.rate_spread},
          {"death_fraction", c.death_fraction},
          {"late_event_fraction", c.late_event_fraction},
          {"min_birth_year", c.min_birth_year},
          {"max_birth_year", c.max_birth_year},
          {"seed", c.seed}};
}

inline CodeRef code_from_name(const std::string& name) {
  const auto colon = name.find(':');
  if (colon == std::string::npos) throw ValidationError("bad code name '" + name + "'");
  return {event_kind_from(name.substr(0, colon)), static_cast<std::uint32_t>(std::stoul(name.substr(colon + 1)))};
}

// Missing keys keep the values already in `c`.
inline void merge_cohort_config(const nlohmann::json& j, CohortConfig& c) {
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_positive") c.n_positive = value.get<std::size_t>();
      else if (key == "n_negative") c.n_negative = value.get<std::size_t>();
      else if (key == "n_diag") c.n_diag = value.get<std::size_t>();
      else if (key == "n_med") c.n_med = value.get<std::size_t>();
      else if (key == "n_lab") c.n_lab = value.get<std::size_t>();
      else if (key == "n_planted") c.n_planted = value.get<std::size_t>();
      else if (key == "planted_hazard") c.planted_hazard = value.get<double>();
      else if (key == "target_sparsity") c.target_sparsity = value.get<double>();
      else if (key == "window_days") c.window_days = value.get<int>();
      else if (key == "rate_spread") c.rate_spread = value.get<double>();
      else if (key == "death_fraction") c.death_fraction = value.get<double>();
      else if (key == "late_event_fraction") c.late_event_fraction = value.get<double>();
      else if (key == "min_birth_year") c.min_birth_year = value.get<int>();
      else if (key == "max_birth_year") c.max_birth_year = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "planted") {
        c.planted.clear();
        for (const auto& p : value) c.planted.push_back({code_from_name(p.at("code").get<std::string>()), p.at("hazard").get<double>()});
      } else {
        throw ValidationError("unknown cohort config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cohort config: ") + e.what());
  }
}

}  // namespace soundexpl
