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

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "reveval/domain.hpp"
#include "reveval/json_canon.hpp"

namespace reveval::dataset {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskKind { Scoring, Pairwise };

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::Scoring ? "scoring" : "pairwise";
}

inline std::optional<TaskKind> parse_task_kind(std::string_view s) {
  if (s == "scoring") return TaskKind::Scoring;
  if (s == "pairwise") return TaskKind::Pairwise;
  return std::nullopt;
}

/// Describes one benchmark file: where it lives, whether it is a scoring
/// or pairwise task, and the rubric definitions records may fall back to.
struct DatasetManifest {
  std::string name;
  TaskKind task_kind = TaskKind::Pairwise;
  std::filesystem::path path;
  std::vector<Rubric> rubric_defs;
  bool has_human_references = false;

  static DatasetManifest load(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open dataset manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw IoError("dataset manifest is not valid JSON: " + std::string(e.what()));
    }
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    auto kind = parse_task_kind(j.at("kind").get<std::string>());
    if (!kind) throw IoError("dataset manifest kind must be scoring or pairwise");
    m.task_kind = *kind;
    m.path = std::filesystem::path(j.at("path").get<std::string>());
    if (m.path.is_relative()) m.path = manifest_path.parent_path() / m.path;
    if (j.contains("rubrics")) {
      for (const auto& r : j.at("rubrics")) {
        Rubric rub;
        rub.name = r.at("name").get<std::string>();
        rub.description = r.value("description", std::string{});
        if (r.contains("scale")) {
          rub.scale_lo = r.at("scale").at(0).get<int>();
          rub.scale_hi = r.at("scale").at(1).get<int>();
        }
        m.rubric_defs.push_back(std::move(rub));
      }
    }
    m.has_human_references = j.value("has_human_references", false);
    if (m.task_kind == TaskKind::Scoring && m.rubric_defs.empty())
      throw IoError("scoring manifest must define at least one rubric");
    return m;
  }
};

struct SchemaError {
  int line = 0;          // 1-based line number in the JSONL file
  std::string field;     // offending field, empty for whole-line problems
  std::string message;
};

struct LoadResult {
  std::vector<EvalInstance> instances;
  std::vector<SchemaError> errors;
  bool ok() const { return errors.empty(); }
};

// ---- record schema (the normalized JSONL contract) ----

inline nlohmann::json rubric_to_json(const Rubric& r) {
  return {{"name", r.name},
          {"description", r.description},
          {"scale", nlohmann::json::array({r.scale_lo, r.scale_hi})}};
}

inline nlohmann::json reference_to_json(const Reference& r) {
  nlohmann::json j{{"text", r.text}, {"provenance", std::string(to_string(r.provenance))}};
  if (r.source_transcript_id) j["source_transcript_id"] = *r.source_transcript_id;
  return j;
}

inline Reference reference_from_json(const nlohmann::json& j) {
  Reference r;
  r.text = j.at("text").get<std::string>();
  auto prov = parse_provenance(j.at("provenance").get<std::string>());
  if (!prov) throw std::runtime_error("unknown provenance: " + j.at("provenance").get<std::string>());
  r.provenance = *prov;
  if (j.contains("source_transcript_id") && !j.at("source_transcript_id").is_null())
    r.source_transcript_id = j.at("source_transcript_id").get<std::string>();
  return r;
}

inline nlohmann::json instance_to_json(const EvalInstance& inst) {
  nlohmann::json j;
  j["id"] = inst.id;
  j["kind"] = is_scoring(inst.gold) ? "scoring" : "pairwise";
  j["instruction"] = inst.instruction;
  nlohmann::json rubrics = nlohmann::json::array();
  for (const auto& r : inst.rubrics) rubrics.push_back(rubric_to_json(r));
  j["rubrics"] = rubrics;
  j["responses"] = inst.responses;
  if (is_scoring(inst.gold)) {
    j["gold"] = {{"scores", std::get<GoldScores>(inst.gold)}};
  } else {
    j["gold"] = {{"preference", std::string(to_string(std::get<Preference>(inst.gold)))}};
  }
  if (!inst.provided_references.empty()) {
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& r : inst.provided_references) refs.push_back(reference_to_json(r));
    j["references"] = refs;
  }
  return j;
}

namespace detail {

struct FieldError {
  std::string field;
  std::string message;
};

// Parses one record; reports the first offending field. Rubrics fall back
// to the manifest definitions when a record omits them.
inline std::optional<FieldError> instance_from_json(const nlohmann::json& j,
                                                    const std::vector<Rubric>& fallback_rubrics,
                                                    EvalInstance& out) {
  auto need = [&](const char* field, nlohmann::json::value_t type) -> const nlohmann::json* {
    if (!j.contains(field)) return nullptr;
    const auto& v = j.at(field);
    if (type == nlohmann::json::value_t::string && !v.is_string()) return nullptr;
    if (type == nlohmann::json::value_t::array && !v.is_array()) return nullptr;
    if (type == nlohmann::json::value_t::object && !v.is_object()) return nullptr;
    return &v;
  };

  const auto* id = need("id", nlohmann::json::value_t::string);
  if (!id) return FieldError{"id", "missing or not a string"};
  out.id = id->get<std::string>();

  const auto* kind = need("kind", nlohmann::json::value_t::string);
  if (!kind) return FieldError{"kind", "missing or not a string"};
  const auto task = parse_task_kind(kind->get<std::string>());
  if (!task) return FieldError{"kind", "must be \"scoring\" or \"pairwise\""};

  const auto* instruction = need("instruction", nlohmann::json::value_t::string);
  if (!instruction) return FieldError{"instruction", "missing or not a string"};
  out.instruction = instruction->get<std::string>();

  if (j.contains("rubrics")) {
    if (!j.at("rubrics").is_array()) return FieldError{"rubrics", "not an array"};
    for (const auto& r : j.at("rubrics")) {
      try {
        Rubric rub;
        rub.name = r.at("name").get<std::string>();
        rub.description = r.value("description", std::string{});
        if (r.contains("scale")) {
          rub.scale_lo = r.at("scale").at(0).get<int>();
          rub.scale_hi = r.at("scale").at(1).get<int>();
        }
        out.rubrics.push_back(std::move(rub));
      } catch (const std::exception& e) {
        return FieldError{"rubrics", e.what()};
      }
    }
  } else {
    out.rubrics = fallback_rubrics;
  }

  const auto* responses = need("responses", nlohmann::json::value_t::array);
  if (!responses) return FieldError{"responses", "missing or not an array"};
  for (const auto& r : *responses) {
    if (!r.is_string()) return FieldError{"responses", "entries must be strings"};
    out.responses.push_back(r.get<std::string>());
  }

  const auto* gold = need("gold", nlohmann::json::value_t::object);
  if (!gold) return FieldError{"gold", "missing or not an object"};
  if (*task == TaskKind::Scoring) {
    if (!gold->contains("scores") || !gold->at("scores").is_object())
      return FieldError{"gold", "scoring record requires gold.scores object"};
    GoldScores scores;
    for (const auto& [name, value] : gold->at("scores").items()) {
      if (!value.is_number()) return FieldError{"gold", "score for '" + name + "' not a number"};
      scores[name] = value.get<double>();
    }
    out.gold = std::move(scores);
  } else {
    if (!gold->contains("preference") || !gold->at("preference").is_string())
      return FieldError{"gold", "pairwise record requires gold.preference string"};
    const auto pref = parse_preference(gold->at("preference").get<std::string>());
    if (!pref) return FieldError{"gold", "preference must be first, second, or tie"};
    out.gold = *pref;
  }

  if (j.contains("references")) {
    if (!j.at("references").is_array()) return FieldError{"references", "not an array"};
    for (const auto& r : j.at("references")) {
      try {
        out.provided_references.push_back(reference_from_json(r));
      } catch (const std::exception& e) {
        return FieldError{"references", e.what()};
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses one normalized record; throws on any schema problem.
inline EvalInstance instance_from_json(const nlohmann::json& j,
                                       const std::vector<Rubric>& fallback_rubrics = {}) {
  EvalInstance inst;
  if (auto err = detail::instance_from_json(j, fallback_rubrics, inst))
    throw std::runtime_error(err->field + ": " + err->message);
  return inst;
}

/// Streams the manifest's JSONL file into validated instances. Malformed
/// lines land in the error report with their 1-based line numbers; good
/// lines keep their file order.
inline LoadResult load(const DatasetManifest& manifest) {
  std::ifstream in(manifest.path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + manifest.path.string());

  LoadResult result;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      result.errors.push_back({line_no, "", std::string("invalid JSON: ") + e.what()});
      continue;
    }
    EvalInstance inst;
    if (auto err = detail::instance_from_json(j, manifest.rubric_defs, inst)) {
      result.errors.push_back({line_no, err->field, err->message});
      continue;
    }
    const bool record_scoring = is_scoring(inst.gold);
    if ((manifest.task_kind == TaskKind::Scoring) != record_scoring) {
      result.errors.push_back({line_no, "kind", "record kind disagrees with manifest"});
      continue;
    }
    const auto validation = validate_instance(inst);
    if (!validation.ok()) {
      for (const auto& violation : validation.violations)
        result.errors.push_back({line_no, violation, "invariant violated"});
      continue;
    }
    if (!seen_ids.insert(inst.id).second) {
      result.errors.push_back({line_no, "id", "duplicate id: " + inst.id});
      continue;
    }
    result.instances.push_back(std::move(inst));
  }
  return result;
}

/// Canonical JSONL writer; load(save(x)) == x on valid datasets.
inline void save(const std::vector<EvalInstance>& instances, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset file for write: " + path.string());
  for (const auto& inst : instances) out << canonical_dump(instance_to_json(inst)) << '\n';
}

/// Drops pairwise instances whose gold label is a tie; kept instances are
/// untouched and keep their order.
inline std::pair<std::vector<EvalInstance>, int> filter_ties(
    const std::vector<EvalInstance>& instances) {
  std::vector<EvalInstance> kept;
  kept.reserve(instances.size());
  int dropped = 0;
  for (const auto& inst : instances) {
    if (!is_scoring(inst.gold) && std::get<Preference>(inst.gold) == Preference::Tie) {
      ++dropped;
      continue;
    }
    kept.push_back(inst);
  }
  return {std::move(kept), dropped};
}

}  // namespace reveval::dataset
