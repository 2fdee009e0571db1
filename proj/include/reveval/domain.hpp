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

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace reveval {

// All domain types are immutable value types in practice: construct, then
// share freely across workers.

enum class Preference { First, Second, Tie };

inline std::string_view to_string(Preference p) {
  switch (p) {
    case Preference::First: return "first";
    case Preference::Second: return "second";
    case Preference::Tie: return "tie";
  }
  return "tie";
}

inline std::optional<Preference> parse_preference(std::string_view s) {
  if (s == "first") return Preference::First;
  if (s == "second") return Preference::Second;
  if (s == "tie") return Preference::Tie;
  return std::nullopt;
}

enum class Provenance { Human, DirectResponse, ResponseAdapted };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Human: return "human";
    case Provenance::DirectResponse: return "direct-response";
    case Provenance::ResponseAdapted: return "response-adapted";
  }
  return "human";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "human") return Provenance::Human;
  if (s == "direct-response") return Provenance::DirectResponse;
  if (s == "response-adapted") return Provenance::ResponseAdapted;
  return std::nullopt;
}

/// A named evaluation dimension with an inclusive integer rating scale.
struct Rubric {
  std::string name;
  std::string description;
  int scale_lo = 1;
  int scale_hi = 5;

  bool operator==(const Rubric&) const = default;
};

struct Reference {
  std::string text;
  Provenance provenance = Provenance::Human;
  // Required when provenance is ResponseAdapted: the transcript that
  // produced this text.
  std::optional<std::string> source_transcript_id;

  bool operator==(const Reference&) const = default;
};

using GoldScores = std::map<std::string, double>;  // rubric name -> score
using GoldLabel = std::variant<GoldScores, Preference>;

inline bool is_scoring(const GoldLabel& g) {
  return std::holds_alternative<GoldScores>(g);
}

/// One evaluation unit: an instruction, one response (scoring) or two
/// (pairwise comparison), and the human gold label.
struct EvalInstance {
  std::string id;
  std::string instruction;
  std::vector<Rubric> rubrics;
  std::vector<std::string> responses;  // size 1 (scoring) or 2 (pairwise)
  GoldLabel gold;
  std::vector<Reference> provided_references;

  bool operator==(const EvalInstance&) const = default;
};

/// A parsed judge outcome: either an integer rating or a preference.
struct Verdict {
  enum class Kind { Score, Preference };

  Kind kind = Kind::Preference;
  int score = 0;                                  // when kind == Score
  Preference preference = Preference::Tie;        // when kind == Preference
  std::string raw_completion;
  std::size_t span_begin = 0;  // character range of the matched marker
  std::size_t span_end = 0;

  bool operator==(const Verdict&) const = default;

  static Verdict make_score(int value, std::string raw, std::size_t b, std::size_t e) {
    Verdict v;
    v.kind = Kind::Score;
    v.score = value;
    v.raw_completion = std::move(raw);
    v.span_begin = b;
    v.span_end = e;
    return v;
  }

  static Verdict make_preference(Preference p, std::string raw, std::size_t b, std::size_t e) {
    Verdict v;
    v.kind = Kind::Preference;
    v.preference = p;
    v.raw_completion = std::move(raw);
    v.span_begin = b;
    v.span_end = e;
    return v;
  }
};

enum class PrimarySide { First, Second };

inline std::string_view to_string(PrimarySide s) {
  return s == PrimarySide::First ? "first" : "second";
}

/// The seeded draw deciding which of the two responses is revised in a
/// pairwise instance. A pure function of (run seed, instance id).
struct RevisionChoice {
  PrimarySide chosen = PrimarySide::First;
  std::string seed_material;  // "<seed>:<instance id>"

  bool operator==(const RevisionChoice&) const = default;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant of an instance. Violations are data,
/// not failures: the result lists what is wrong and never throws.
inline ValidationResult validate_instance(const EvalInstance& inst) {
  ValidationResult r;
  auto fail = [&r](std::string msg) { r.violations.push_back(std::move(msg)); };

  if (inst.id.empty()) fail("id non-empty");
  if (inst.responses.size() != 1 && inst.responses.size() != 2)
    fail("responses length must be exactly 1 or 2");

  for (const auto& rub : inst.rubrics) {
    if (rub.name.empty()) fail("rubric name non-empty");
    if (rub.scale_lo >= rub.scale_hi)
      fail("rubric '" + rub.name + "' scale lower bound must be < upper bound");
  }

  if (is_scoring(inst.gold)) {
    if (inst.responses.size() != 1)
      fail("scoring instance must carry exactly 1 response");
    const auto& scores = std::get<GoldScores>(inst.gold);
    if (inst.rubrics.empty()) fail("scoring instance must define at least one rubric");
    for (const auto& rub : inst.rubrics) {
      auto it = scores.find(rub.name);
      if (it == scores.end()) {
        fail("gold scores missing entry for rubric '" + rub.name + "'");
      } else if (it->second < rub.scale_lo || it->second > rub.scale_hi) {
        fail("gold score for rubric '" + rub.name + "' outside scale");
      }
    }
    for (const auto& [name, value] : scores) {
      (void)value;
      bool known = false;
      for (const auto& rub : inst.rubrics)
        if (rub.name == name) known = true;
      if (!known) fail("gold score for unknown rubric '" + name + "'");
    }
  } else {
    if (inst.responses.size() != 2)
      fail("pairwise instance must carry exactly 2 responses");
  }

  for (const auto& ref : inst.provided_references) {
    if (ref.provenance == Provenance::ResponseAdapted && !ref.source_transcript_id)
      fail("response-adapted reference requires a source_transcript_id");
  }
  return r;
}

}  // namespace reveval
