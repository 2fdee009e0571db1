/*
 * Copyright 2026 The reveval Authors.
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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reveval/domain.hpp"
#include "reveval/json_canon.hpp"

namespace reveval::meta {

// Correlations return nullopt for degenerate input (a constant side):
// "undefined" is reported as missing, never as 0.

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct AllDegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyAfterExclusion : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct JoinError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_lengths(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LengthMismatch("correlation inputs differ in length");
  if (a.size() < 2) throw LengthMismatch("correlation requires at least 2 samples");
}

}  // namespace detail

/// Kendall tau-b: (C - D) / sqrt((C+D+Tx)(C+D+Ty)) classified over all
/// pairs; pairs tied on both sides count in neither correction term.
/// O(n^2); adequate at benchmark scale (n <= ~35k). An O(n log n)
/// merge-sort formulation is the upgrade path if inputs ever grow.
inline std::optional<double> kendall(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  detail::check_lengths(x, y);
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) { ++tied_x; continue; }
      if (dy == 0.0) { ++tied_y; continue; }
      if ((dx > 0.0) == (dy > 0.0)) ++concordant; else ++discordant;
    }
  }
  const long long nx = concordant + discordant + tied_x;
  const long long ny = concordant + discordant + tied_y;
  if (nx == 0 || ny == 0) return std::nullopt;
  return static_cast<double>(concordant - discordant) /
         (std::sqrt(static_cast<double>(nx)) * std::sqrt(static_cast<double>(ny)));
}

/// Average ranks, 1-based, ties share the mean of their rank block.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

/// Product-moment correlation, two-pass for numerical stability.
inline std::optional<double> pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  detail::check_lengths(x, y);
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

/// Spearman rho: Pearson correlation of average ranks.
inline std::optional<double> spearman(const std::vector<double>& x,
                                      const std::vector<double>& y) {
  detail::check_lengths(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

/// Fraction of predictions matching gold. Gold must be tie-free (ties are
/// filtered during ingestion); a Tie prediction earns `tie_credit`
/// (0 by default, 0.5 when the operator opts in).
inline double accuracy(const std::vector<Preference>& preds,
                       const std::vector<Preference>& gold,
                       double tie_credit = 0.0) {
  if (preds.size() != gold.size()) throw LengthMismatch("accuracy inputs differ in length");
  if (preds.empty()) throw LengthMismatch("accuracy requires at least one sample");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (gold[i] == Preference::Tie)
      throw std::invalid_argument("accuracy: gold contains a tie; filter ties first");
    if (preds[i] == gold[i]) total += 1.0;
    else if (preds[i] == Preference::Tie) total += tie_credit;
  }
  return total / static_cast<double>(preds.size());
}

struct CorrTriple {
  std::optional<double> tau;
  std::optional<double> rho;
  std::optional<double> r;
};

struct RubricAverage {
  std::optional<double> tau;
  std::optional<double> rho;
  std::optional<double> r;
  int tau_defined = 0;
  int rho_defined = 0;
  int r_defined = 0;
  int rubrics = 0;
};

/// Unweighted mean of the defined correlations across rubrics; undefined
/// rubrics are excluded from the mean and counted.
inline RubricAverage per_rubric_average(const std::map<std::string, CorrTriple>& per_rubric) {
  if (per_rubric.empty()) throw std::invalid_argument("per_rubric_average: no rubrics");
  RubricAverage avg;
  avg.rubrics = static_cast<int>(per_rubric.size());
  double st = 0.0, sr = 0.0, sp = 0.0;
  for (const auto& [name, t] : per_rubric) {
    (void)name;
    if (t.tau) { st += *t.tau; ++avg.tau_defined; }
    if (t.rho) { sr += *t.rho; ++avg.rho_defined; }
    if (t.r) { sp += *t.r; ++avg.r_defined; }
  }
  if (avg.tau_defined == 0 && avg.rho_defined == 0 && avg.r_defined == 0)
    throw AllDegenerate("per_rubric_average: every rubric correlation is undefined");
  if (avg.tau_defined > 0) avg.tau = st / avg.tau_defined;
  if (avg.rho_defined > 0) avg.rho = sr / avg.rho_defined;
  if (avg.r_defined > 0) avg.r = sp / avg.r_defined;
  return avg;
}

/// One forward/swapped pair of preference outcomes, already un-swapped
/// into agreement or not by the judge.
struct SwapRecord {
  bool consistent = false;
  bool excluded = false;  // an abstention in either leg
};

/// Ratio of pairs whose verdict changed when response positions were
/// swapped, over the non-excluded pairs.
inline double flip_rate(const std::vector<SwapRecord>& pairs) {
  long long flips = 0, kept = 0;
  for (const auto& p : pairs) {
    if (p.excluded) continue;
    ++kept;
    if (!p.consistent) ++flips;
  }
  if (kept == 0) throw EmptyAfterExclusion("flip_rate: no pairs left after exclusions");
  return static_cast<double>(flips) / static_cast<double>(kept);
}

struct BucketRow {
  double sim_lo = 0.0;
  double sim_hi = 0.0;
  int n = 0;
  double accuracy_ref = 0.0;
  double accuracy_free = 0.0;
  std::optional<double> effectiveness;  // accuracy_ref / accuracy_free

  nlohmann::json to_json() const {
    nlohmann::json j{{"similarity_lo", sim_lo},
                     {"similarity_hi", sim_hi},
                     {"n", n},
                     {"accuracy_ref", accuracy_ref},
                     {"accuracy_free", accuracy_free}};
    j["effectiveness"] = effectiveness ? nlohmann::json(*effectiveness) : nlohmann::json();
    return j;
  }
};

/// Partitions instances into k equal-count buckets by similarity and
/// reports, per bucket, reference-based vs reference-free accuracy and
/// their ratio. Bucket sizes always sum to n.
inline std::vector<BucketRow> effectiveness_buckets(const std::vector<double>& sims,
                                                    const std::vector<bool>& correct_ref,
                                                    const std::vector<bool>& correct_free,
                                                    int k) {
  const std::size_t n = sims.size();
  if (correct_ref.size() != n || correct_free.size() != n)
    throw LengthMismatch("effectiveness_buckets inputs differ in length");
  if (k < 1) throw std::invalid_argument("effectiveness_buckets: k must be >= 1");
  for (double s : sims)
    if (!std::isfinite(s)) throw std::invalid_argument("effectiveness_buckets: non-finite similarity");
  if (static_cast<std::size_t>(k) > n)
    throw InsufficientData("effectiveness_buckets: more buckets than instances");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&sims](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });

  std::vector<BucketRow> rows;
  rows.reserve(static_cast<std::size_t>(k));
  for (int b = 0; b < k; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(k);
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(k);
    BucketRow row;
    row.n = static_cast<int>(hi - lo);
    row.sim_lo = sims[order[lo]];
    row.sim_hi = sims[order[hi - 1]];
    long long ok_ref = 0, ok_free = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      if (correct_ref[order[i]]) ++ok_ref;
      if (correct_free[order[i]]) ++ok_free;
    }
    row.accuracy_ref = static_cast<double>(ok_ref) / static_cast<double>(row.n);
    row.accuracy_free = static_cast<double>(ok_free) / static_cast<double>(row.n);
    if (row.accuracy_free > 0.0) row.effectiveness = row.accuracy_ref / row.accuracy_free;
    rows.push_back(row);
  }
  return rows;
}

/// Agreement summary between one evaluator (judge mode or metric) and the
/// human labels, plus the optional bias / effectiveness analyses.
/// Serializes canonically so byte-identical reports certify determinism.
struct MetaReport {
  std::string task;
  std::string evaluator;  // judge mode name or metric name
  std::optional<double> kendall_tau;
  std::optional<double> spearman_rho;
  std::optional<double> pearson_r;
  std::optional<double> accuracy;
  int n = 0;
  std::map<std::string, CorrTriple> per_rubric;
  std::optional<double> flip_rate;
  std::optional<std::vector<BucketRow>> buckets;
  std::string config_fingerprint;

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json();
    };
    nlohmann::json j;
    j["task"] = task;
    j["evaluator"] = evaluator;
    j["kendall_tau"] = opt(kendall_tau);
    j["spearman_rho"] = opt(spearman_rho);
    j["pearson_r"] = opt(pearson_r);
    j["accuracy"] = opt(accuracy);
    j["n"] = n;
    nlohmann::json rub = nlohmann::json::object();
    for (const auto& [name, t] : per_rubric) {
      rub[name] = {{"tau", opt(t.tau)}, {"rho", opt(t.rho)}, {"r", opt(t.r)}};
    }
    j["per_rubric"] = rub;
    j["flip_rate"] = opt(flip_rate);
    if (buckets) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& row : *buckets) arr.push_back(row.to_json());
      j["buckets"] = arr;
    } else {
      j["buckets"] = nullptr;
    }
    j["config_fingerprint"] = config_fingerprint;
    return j;
  }

  std::string to_canonical_json() const { return canonical_dump(to_json()); }
};

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

}  // namespace detail

/// Markdown rendering of a set of reports, one row per evaluator.
inline std::string render_markdown(const std::vector<MetaReport>& reports) {
  std::string out;
  out += "| evaluator | task | tau | rho | r | accuracy | flip rate | n |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& rep : reports) {
    out += "| " + rep.evaluator + " | " + rep.task + " | " + detail::fmt_opt(rep.kendall_tau) +
           " | " + detail::fmt_opt(rep.spearman_rho) + " | " + detail::fmt_opt(rep.pearson_r) +
           " | " + detail::fmt_opt(rep.accuracy) + " | " + detail::fmt_opt(rep.flip_rate) +
           " | " + std::to_string(rep.n) + " |\n";
  }
  for (const auto& rep : reports) {
    if (!rep.per_rubric.empty()) {
      out += "\n### per-rubric (" + rep.evaluator + ")\n\n";
      out += "| rubric | tau | rho | r |\n|---|---|---|---|\n";
      for (const auto& [name, t] : rep.per_rubric) {
        out += "| " + name + " | " + detail::fmt_opt(t.tau) + " | " + detail::fmt_opt(t.rho) +
               " | " + detail::fmt_opt(t.r) + " |\n";
      }
    }
    if (rep.buckets) {
      out += "\n### similarity buckets (" + rep.evaluator + ")\n\n";
      out += "| range | n | acc (ref) | acc (free) | effectiveness |\n|---|---|---|---|---|\n";
      for (const auto& row : *rep.buckets) {
        char range[64];
        std::snprintf(range, sizeof(range), "[%.4f, %.4f]", row.sim_lo, row.sim_hi);
        char acc1[32], acc2[32];
        std::snprintf(acc1, sizeof(acc1), "%.4f", row.accuracy_ref);
        std::snprintf(acc2, sizeof(acc2), "%.4f", row.accuracy_free);
        out += std::string("| ") + range + " | " + std::to_string(row.n) + " | " + acc1 +
               " | " + acc2 + " | " + detail::fmt_opt(row.effectiveness) + " |\n";
      }
    }
  }
  return out;
}

}  // namespace reveval::meta
