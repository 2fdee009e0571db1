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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reveval/dataset.hpp"
#include "reveval/digest.hpp"
#include "reveval/gateway.hpp"
#include "reveval/judge.hpp"
#include "reveval/json_canon.hpp"
#include "reveval/meta.hpp"
#include "reveval/metrics.hpp"
#include "reveval/prompt.hpp"
#include "reveval/reviser.hpp"

namespace reveval::pipeline {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProviderConfig {
  std::string kind = "mock";  // "mock" | "http"
  std::string endpoint;
  std::string model = "mock-model";
  std::string embed_model = "text-embedding-3-small";
  std::string credential_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int max_tokens = 1024;
  int concurrency = 4;
  int retries = 3;
  int backoff_ms = 250;
  int timeout_ms = 60000;
  bool verbose = false;
  std::uint64_t mock_seed = 0;
  std::string mock_judge_style = "content-hash";
};

/// Everything one run needs. Stage outputs are files on purpose: model
/// calls are slow and costly, so persisted, digest-chained artifacts make
/// every stage resumable and auditable.
struct RunConfig {
  std::filesystem::path dataset_manifest;
  judge::JudgeMode mode = judge::JudgeMode::AdaptedRef;
  std::uint64_t seed = 0;
  bool seed_set = false;
  ProviderConfig provider;
  std::filesystem::path template_dir = "templates";
  std::filesystem::path out_dir = "out";
  std::filesystem::path cache_path;  // empty: in-memory cache only
  std::vector<std::string> metric_set{"bleu", "rouge_l", "meteor", "embed_f1"};
  std::vector<double> cycle_temps{0.0, 0.3, 0.7};
  bool multi_cycle = false;
  bool swap = false;
  int buckets = 5;
  double tie_credit = 0.0;
  Rubric pairwise_rubric{"helpfulness",
                         "overall helpfulness, accuracy, and instruction-following", 1, 10};
  metrics::MetricConfig metric_config;

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    RunConfig cfg;
    if (j.contains("dataset")) cfg.dataset_manifest = j.at("dataset").get<std::string>();
    if (j.contains("mode")) {
      auto m = judge::parse_judge_mode(j.at("mode").get<std::string>());
      if (!m) throw ConfigError("unknown mode in config");
      cfg.mode = *m;
    }
    if (j.contains("seed")) {
      cfg.seed = j.at("seed").get<std::uint64_t>();
      cfg.seed_set = true;
    }
    if (j.contains("template_dir")) cfg.template_dir = j.at("template_dir").get<std::string>();
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("cache")) cfg.cache_path = j.at("cache").get<std::string>();
    if (j.contains("metrics")) cfg.metric_set = j.at("metrics").get<std::vector<std::string>>();
    if (j.contains("temps")) cfg.cycle_temps = j.at("temps").get<std::vector<double>>();
    if (j.contains("multi_cycle")) cfg.multi_cycle = j.at("multi_cycle").get<bool>();
    if (j.contains("swap")) cfg.swap = j.at("swap").get<bool>();
    if (j.contains("buckets")) cfg.buckets = j.at("buckets").get<int>();
    if (j.contains("tie_credit")) cfg.tie_credit = j.at("tie_credit").get<double>();
    if (j.contains("pairwise_rubric")) {
      const auto& r = j.at("pairwise_rubric");
      cfg.pairwise_rubric.name = r.value("name", cfg.pairwise_rubric.name);
      cfg.pairwise_rubric.description = r.value("description", cfg.pairwise_rubric.description);
      if (r.contains("scale")) {
        cfg.pairwise_rubric.scale_lo = r.at("scale").at(0).get<int>();
        cfg.pairwise_rubric.scale_hi = r.at("scale").at(1).get<int>();
      }
    }
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      cfg.provider.kind = p.value("kind", cfg.provider.kind);
      cfg.provider.endpoint = p.value("endpoint", cfg.provider.endpoint);
      cfg.provider.model = p.value("model", cfg.provider.model);
      cfg.provider.embed_model = p.value("embed_model", cfg.provider.embed_model);
      cfg.provider.credential_env = p.value("credential_env", cfg.provider.credential_env);
      cfg.provider.temperature = p.value("temperature", cfg.provider.temperature);
      cfg.provider.max_tokens = p.value("max_tokens", cfg.provider.max_tokens);
      cfg.provider.concurrency = p.value("concurrency", cfg.provider.concurrency);
      cfg.provider.retries = p.value("retries", cfg.provider.retries);
      cfg.provider.backoff_ms = p.value("backoff_ms", cfg.provider.backoff_ms);
      cfg.provider.timeout_ms = p.value("timeout_ms", cfg.provider.timeout_ms);
      cfg.provider.verbose = p.value("verbose", cfg.provider.verbose);
      cfg.provider.mock_seed = p.value("mock_seed", cfg.provider.mock_seed);
      cfg.provider.mock_judge_style = p.value("mock_judge_style", cfg.provider.mock_judge_style);
    }
    return cfg;
  }

  /// Digest over every semantic knob (not paths, not operational limits):
  /// two runs with equal fingerprints and equal inputs must produce equal
  /// artifacts on a deterministic backend.
  std::string fingerprint() const {
    nlohmann::json j{
        {"mode", std::string(judge::to_string(mode))},
        {"seed", seed_set ? nlohmann::json(seed) : nlohmann::json()},
        {"provider",
         {{"kind", provider.kind},
          {"model", provider.model},
          {"embed_model", provider.embed_model},
          {"temperature", provider.temperature},
          {"max_tokens", provider.max_tokens},
          {"mock_seed", provider.mock_seed},
          {"mock_judge_style", provider.mock_judge_style}}},
        {"metrics", metric_set},
        {"metric_config", metric_config.to_json()},
        {"temps", cycle_temps},
        {"multi_cycle", multi_cycle},
        {"swap", swap},
        {"buckets", buckets},
        {"tie_credit", tie_credit},
        {"pairwise_rubric", dataset::rubric_to_json(pairwise_rubric)}};
    return sha256_hex(canonical_dump(j));
  }
};

/// Builds the gateway for a run. Network providers are constructed by the
/// CLI (which links the HTTP stack) and injected here; the library itself
/// only knows the mock.
inline std::shared_ptr<gateway::Gateway> build_gateway(
    const RunConfig& cfg, std::shared_ptr<gateway::Provider> provider = nullptr) {
  if (!provider) {
    if (cfg.provider.kind != "mock")
      throw ConfigError("provider kind '" + cfg.provider.kind +
                        "' must be constructed by the caller");
    gateway::MockProvider::Options mo;
    mo.seed = cfg.provider.mock_seed;
    if (cfg.provider.mock_judge_style == "content-hash")
      mo.judge_style = gateway::MockProvider::JudgeStyle::ContentHash;
    else if (cfg.provider.mock_judge_style == "always-first")
      mo.judge_style = gateway::MockProvider::JudgeStyle::AlwaysFirst;
    else if (cfg.provider.mock_judge_style == "content-digest")
      mo.judge_style = gateway::MockProvider::JudgeStyle::PreferByContentDigest;
    else
      throw ConfigError("unknown mock_judge_style: " + cfg.provider.mock_judge_style);
    provider = std::make_shared<gateway::MockProvider>(mo);
  }
  std::shared_ptr<gateway::TranscriptCache> cache;
  if (!cfg.cache_path.empty()) {
    if (!cfg.cache_path.parent_path().empty())
      std::filesystem::create_directories(cfg.cache_path.parent_path());
    cache = std::make_shared<gateway::TranscriptCache>(cfg.cache_path);
  }
  gateway::GatewayConfig gc;
  gc.concurrency = cfg.provider.concurrency;
  gc.retries = cfg.provider.retries;
  gc.backoff_base_ms = cfg.provider.backoff_ms;
  return std::make_shared<gateway::Gateway>(std::move(provider), gc, std::move(cache));
}

// ---- artifacts ----

struct Artifact {
  nlohmann::json header;
  std::vector<nlohmann::json> records;
  std::string digest;  // sha256 of the file bytes
};

inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  return to_hex(h.finish());
}

inline std::string write_artifact(const std::filesystem::path& path, const std::string& type,
                                  const nlohmann::json& inputs, const nlohmann::json& summary,
                                  const std::vector<nlohmann::json>& records) {
  std::string content = canonical_dump(nlohmann::json{
                            {"artifact", type}, {"version", 1}, {"inputs", inputs}, {"summary", summary}}) +
                        "\n";
  for (const auto& r : records) content += canonical_dump(r) + "\n";
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write artifact: " + path.string());
  out << content;
  out.close();
  return sha256_hex(content);
}

inline Artifact read_artifact(const std::filesystem::path& path, const std::string& expected_type) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open artifact: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Artifact art;
  art.digest = sha256_hex(content);
  std::istringstream ss(content);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (first) {
      art.header = std::move(j);
      first = false;
      if (art.header.value("artifact", "") != expected_type)
        throw ConfigError("artifact " + path.string() + " has type '" +
                          art.header.value("artifact", "") + "', expected '" + expected_type + "'");
    } else {
      art.records.push_back(std::move(j));
    }
  }
  if (first) throw ConfigError("artifact is empty: " + path.string());
  return art;
}

struct StageResult {
  int total = 0;
  int failures = 0;
  std::filesystem::path artifact;
  std::string digest;
  bool ok() const { return failures == 0; }
};

namespace detail {

// One unit of model work: a pairwise instance, or one (instance, rubric)
// pair for scoring datasets (revision and judging are rubric-conditioned).
struct WorkItem {
  std::size_t instance = 0;
  Rubric rubric;
};

inline std::vector<WorkItem> make_work_items(const dataset::DatasetManifest& manifest,
                                             const std::vector<EvalInstance>& instances,
                                             const RunConfig& cfg) {
  std::vector<WorkItem> items;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (manifest.task_kind == dataset::TaskKind::Scoring) {
      for (const auto& rub : instances[i].rubrics) items.push_back({i, rub});
    } else {
      items.push_back({i, cfg.pairwise_rubric});
    }
  }
  return items;
}

inline std::string item_key(const std::string& id, const std::string& rubric) {
  return id + "\x1f" + rubric;
}

inline std::pair<dataset::DatasetManifest, dataset::LoadResult> load_dataset(const RunConfig& cfg) {
  if (cfg.dataset_manifest.empty()) throw ConfigError("no dataset manifest configured");
  auto manifest = dataset::DatasetManifest::load(cfg.dataset_manifest);
  auto lr = dataset::load(manifest);
  if (!lr.ok()) {
    std::string msg = "dataset has schema errors:";
    for (const auto& e : lr.errors)
      msg += "\n  line " + std::to_string(e.line) + " [" + e.field + "] " + e.message;
    throw ConfigError(msg);
  }
  return {std::move(manifest), std::move(lr)};
}

inline nlohmann::json transcript_brief(const gateway::Transcript& t) {
  // Stable subset only: latency and cache-hit flags vary between cold and
  // warm runs and would break artifact byte-identity.
  return {{"id", t.id},
          {"template_id", t.request.template_id},
          {"template_version", t.request.template_version},
          {"model", t.request.model},
          {"completion", t.completion}};
}

inline nlohmann::json verdict_to_json(const Verdict& v) {
  nlohmann::json j;
  if (v.kind == Verdict::Kind::Score) {
    j["kind"] = "score";
    j["score"] = v.score;
  } else {
    j["kind"] = "preference";
    j["preference"] = std::string(to_string(v.preference));
  }
  j["raw_completion"] = v.raw_completion;
  j["span"] = nlohmann::json::array({v.span_begin, v.span_end});
  return j;
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  if (j.at("kind").get<std::string>() == "score") {
    v.kind = Verdict::Kind::Score;
    v.score = j.at("score").get<int>();
  } else {
    v.kind = Verdict::Kind::Preference;
    v.preference = *parse_preference(j.at("preference").get<std::string>());
  }
  v.raw_completion = j.value("raw_completion", std::string{});
  if (j.contains("span")) {
    v.span_begin = j.at("span").at(0).get<std::size_t>();
    v.span_end = j.at("span").at(1).get<std::size_t>();
  }
  return v;
}

// Reference lookup for judge/metric stages: either a references artifact
// keyed by (id, rubric), or the dataset's own human references.
class ReferenceSource {
 public:
  static ReferenceSource from_artifact(const Artifact& art) {
    ReferenceSource src;
    src.artifact_ = true;
    for (const auto& rec : art.records) {
      if (!rec.contains("reference") || rec.at("reference").is_null()) continue;
      Reference ref = dataset::reference_from_json(rec.at("reference"));
      src.by_key_[item_key(rec.at("id").get<std::string>(), rec.at("rubric").get<std::string>())] =
          std::move(ref);
    }
    return src;
  }

  static ReferenceSource from_dataset() { return ReferenceSource{}; }

  std::optional<Reference> lookup(const EvalInstance& inst, const std::string& rubric) const {
    if (artifact_) {
      auto it = by_key_.find(item_key(inst.id, rubric));
      if (it == by_key_.end()) return std::nullopt;
      return it->second;
    }
    for (const auto& ref : inst.provided_references)
      if (ref.provenance == Provenance::Human) return ref;
    return std::nullopt;
  }

 private:
  bool artifact_ = false;
  std::map<std::string, Reference> by_key_;
};

}  // namespace detail

/// Generates one reference per work item: response-adapted references in
/// adapted mode (the seeded pairwise draw picks the primary text), or the
/// model's direct responses in ref-based mode. Per-item failures are
/// recorded, not fatal; a warm cache makes reruns byte-identical.
inline StageResult cmd_revise(const RunConfig& cfg,
                              std::shared_ptr<gateway::Gateway> gw = nullptr) {
  if (cfg.mode == judge::JudgeMode::RefFree)
    throw ConfigError("ref-free mode produces no references; nothing to revise");
  if (cfg.mode == judge::JudgeMode::AdaptedRef && !cfg.seed_set)
    throw ConfigError("revision requires --seed");

  auto [manifest, lr] = detail::load_dataset(cfg);
  const auto& instances = lr.instances;
  const auto items = detail::make_work_items(manifest, instances, cfg);

  if (!gw) gw = build_gateway(cfg);
  const auto templates = prompt::TemplateRegistry::load_dir(cfg.template_dir);
  reviser::ReviserOptions ro;
  ro.model = cfg.provider.model;
  ro.temperature = cfg.provider.temperature;
  ro.max_tokens = cfg.provider.max_tokens;
  reviser::Reviser rev(*gw, templates, ro);

  const bool adapted = cfg.mode == judge::JudgeMode::AdaptedRef;
  std::vector<nlohmann::json> records(items.size());
  std::atomic<int> failures{0};
  gw->parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto& inst = instances[item.instance];
    nlohmann::json rec{{"id", inst.id}, {"rubric", item.rubric.name}, {"error", nullptr}};
    try {
      reviser::RevisionOutcome outcome;
      if (!adapted) {
        outcome = rev.direct_response(inst.instruction);
      } else if (inst.responses.size() == 2) {
        outcome = rev.revise_pairwise(inst.instruction, item.rubric, inst.responses[0],
                                      inst.responses[1], cfg.seed, inst.id);
      } else {
        outcome = rev.revise_single(inst.instruction, item.rubric, inst.responses[0]);
      }
      rec["reference"] = dataset::reference_to_json(outcome.reference);
      rec["choice"] = outcome.choice
                          ? nlohmann::json{{"chosen", std::string(to_string(outcome.choice->chosen))},
                                           {"seed_material", outcome.choice->seed_material}}
                          : nlohmann::json();
      rec["transcript"] = detail::transcript_brief(outcome.transcript);
    } catch (const std::exception& e) {
      rec["error"] = std::string(e.what());
      failures.fetch_add(1);
    }
    records[i] = std::move(rec);
  });

  const std::string tpl_version =
      templates.version(adapted ? prompt::TemplateId::RevisePairwise : prompt::TemplateId::DirectResponse);
  nlohmann::json inputs{{"dataset", manifest.name},
                        {"dataset_digest", file_digest(manifest.path)},
                        {"config_fingerprint", cfg.fingerprint()},
                        {"template_version", tpl_version},
                        {"provenance", adapted ? "response-adapted" : "direct-response"},
                        {"mode", std::string(judge::to_string(cfg.mode))}};
  inputs["seed"] = cfg.seed_set ? nlohmann::json(cfg.seed) : nlohmann::json();
  nlohmann::json summary{{"items", items.size()}, {"failures", failures.load()}};

  StageResult res;
  res.total = static_cast<int>(items.size());
  res.failures = failures.load();
  res.artifact = cfg.out_dir / "references.jsonl";
  res.digest = write_artifact(res.artifact, "references", inputs, summary, records);
  return res;
}

/// Judges every work item in the configured mode. Adapted mode requires a
/// references artifact with response-adapted provenance; ref-based mode
/// takes a direct-response artifact or the dataset's human references.
/// With swap enabled, each pair is judged in both orientations.
inline StageResult cmd_judge(const RunConfig& cfg,
                             const std::optional<std::filesystem::path>& reference_artifact,
                             std::shared_ptr<gateway::Gateway> gw = nullptr) {
  auto [manifest, lr] = detail::load_dataset(cfg);
  const auto& instances = lr.instances;
  const auto items = detail::make_work_items(manifest, instances, cfg);

  std::optional<Artifact> ref_art;
  detail::ReferenceSource refs = detail::ReferenceSource::from_dataset();
  std::string upstream_digest;
  if (reference_artifact) {
    ref_art = read_artifact(*reference_artifact, "references");
    refs = detail::ReferenceSource::from_artifact(*ref_art);
    upstream_digest = ref_art->digest;
  }

  switch (cfg.mode) {
    case judge::JudgeMode::RefFree:
      if (reference_artifact)
        throw ConfigError("ref-free judging does not take a references artifact");
      break;
    case judge::JudgeMode::AdaptedRef: {
      if (!reference_artifact)
        throw ConfigError("adapted-reference judging requires a references artifact");
      if (ref_art->header.at("inputs").value("provenance", "") != "response-adapted")
        throw ConfigError("adapted-reference judging requires response-adapted references");
      break;
    }
    case judge::JudgeMode::RefBased: {
      if (reference_artifact) {
        if (ref_art->header.at("inputs").value("provenance", "") != "direct-response")
          throw ConfigError("ref-based judging takes direct-response references");
      } else if (!manifest.has_human_references) {
        throw ConfigError("ref-based judging needs a references artifact or human references");
      }
      break;
    }
  }
  if (cfg.multi_cycle && !cfg.seed_set)
    throw ConfigError("multi-cycle voting requires --seed");
  if (cfg.multi_cycle && cfg.cycle_temps.empty())
    throw ConfigError("multi-cycle voting requires a non-empty temperature list");
  if ((cfg.swap || cfg.multi_cycle) && manifest.task_kind == dataset::TaskKind::Scoring)
    throw ConfigError("swap and multi-cycle judging apply to pairwise datasets only");

  if (!gw) gw = build_gateway(cfg);
  const auto templates = prompt::TemplateRegistry::load_dir(cfg.template_dir);
  judge::JudgeOptions jo;
  jo.model = cfg.provider.model;
  jo.temperature = cfg.provider.temperature;
  jo.max_tokens = cfg.provider.max_tokens;
  judge::Judge judge_runner(*gw, templates, jo);

  const bool scoring = manifest.task_kind == dataset::TaskKind::Scoring;
  std::vector<nlohmann::json> records(items.size());
  std::atomic<int> failures{0};
  std::atomic<int> abstentions{0};

  gw->parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto& inst = instances[item.instance];
    nlohmann::json rec{{"id", inst.id},
                       {"rubric", item.rubric.name},
                       {"mode", std::string(judge::to_string(cfg.mode))},
                       {"error", nullptr}};
    try {
      std::optional<Reference> ref;
      if (cfg.mode != judge::JudgeMode::RefFree) {
        ref = refs.lookup(inst, item.rubric.name);
        if (!ref) throw std::runtime_error("no reference available for this item");
      }
      if (scoring) {
        auto out = judge_runner.judge_score(inst.instruction, item.rubric, inst.responses[0],
                                            cfg.mode, ref);
        rec["verdict"] = out.verdict ? detail::verdict_to_json(*out.verdict) : nlohmann::json();
        rec["abstained"] = out.abstained;
        if (out.abstained) abstentions.fetch_add(1);
      } else if (cfg.swap) {
        auto pair = judge_runner.judge_pair_swapped(inst.instruction, item.rubric,
                                                    inst.responses[0], inst.responses[1],
                                                    cfg.mode, ref);
        rec["forward"] = {{"verdict", detail::verdict_to_json(pair.forward.verdict)},
                          {"abstained", pair.forward.abstained}};
        rec["swapped"] = {{"verdict", detail::verdict_to_json(pair.swapped.verdict)},
                          {"abstained", pair.swapped.abstained}};
        rec["consistent"] = pair.consistent;
        rec["excluded"] = pair.excluded;
        if (pair.excluded) abstentions.fetch_add(1);
      } else if (cfg.multi_cycle) {
        auto out = judge_runner.multi_cycle_judge(inst.instruction, item.rubric,
                                                  inst.responses[0], inst.responses[1], cfg.mode,
                                                  ref, cfg.cycle_temps);
        rec["verdict"] = detail::verdict_to_json(out.verdict);
        rec["abstained"] = out.abstained;
      } else {
        auto out = judge_runner.judge_pair(inst.instruction, item.rubric, inst.responses[0],
                                           inst.responses[1], cfg.mode, ref);
        rec["verdict"] = detail::verdict_to_json(out.verdict);
        rec["abstained"] = out.abstained;
        if (out.abstained) abstentions.fetch_add(1);
      }
    } catch (const std::exception& e) {
      rec["error"] = std::string(e.what());
      failures.fetch_add(1);
    }
    records[i] = std::move(rec);
  });

  const auto tpl_id = cfg.mode == judge::JudgeMode::RefFree
                          ? (scoring ? prompt::TemplateId::RefFreeScore : prompt::TemplateId::RefFreePairwise)
                          : (scoring ? prompt::TemplateId::RefBasedScore : prompt::TemplateId::RefBasedPairwise);
  nlohmann::json inputs{{"dataset", manifest.name},
                        {"dataset_digest", file_digest(manifest.path)},
                        {"config_fingerprint", cfg.fingerprint()},
                        {"template_version", templates.version(tpl_id)},
                        {"mode", std::string(judge::to_string(cfg.mode))},
                        {"swap", cfg.swap},
                        {"multi_cycle", cfg.multi_cycle}};
  inputs["references_digest"] = upstream_digest.empty() ? nlohmann::json() : nlohmann::json(upstream_digest);
  nlohmann::json summary{{"items", items.size()},
                         {"failures", failures.load()},
                         {"abstentions", abstentions.load()}};

  StageResult res;
  res.total = static_cast<int>(items.size());
  res.failures = failures.load();
  res.artifact = cfg.out_dir / (cfg.swap ? "swap_verdicts.jsonl" : "verdicts.jsonl");
  res.digest = write_artifact(res.artifact, cfg.swap ? "swap_verdicts" : "verdicts", inputs,
                              summary, records);
  return res;
}

/// Scores every work item with the configured classic metrics against the
/// supplied references. Pairwise datasets get the indicator extension per
/// metric plus a cross-metric majority-vote column; embed_f1 also yields
/// the response/reference similarity used by the effectiveness analysis.
inline StageResult cmd_metric_eval(const RunConfig& cfg,
                                   const std::optional<std::filesystem::path>& reference_artifact,
                                   std::shared_ptr<gateway::Gateway> gw = nullptr) {
  if (cfg.metric_set.empty()) throw ConfigError("metric set is empty");
  for (const auto& name : cfg.metric_set) {
    const auto& known = metrics::known_metric_names();
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("unknown metric: " + name);
  }

  auto [manifest, lr] = detail::load_dataset(cfg);
  const auto& instances = lr.instances;
  const auto items = detail::make_work_items(manifest, instances, cfg);

  std::optional<Artifact> ref_art;
  detail::ReferenceSource refs = detail::ReferenceSource::from_dataset();
  std::string upstream_digest;
  if (reference_artifact) {
    ref_art = read_artifact(*reference_artifact, "references");
    refs = detail::ReferenceSource::from_artifact(*ref_art);
    upstream_digest = ref_art->digest;
  } else if (!manifest.has_human_references) {
    throw ConfigError("metric evaluation needs a references artifact or human references");
  }

  if (!gw) gw = build_gateway(cfg);
  metrics::Embedder embedder = [&gw](const std::vector<std::string>& texts) {
    return gw->embed(texts);
  };

  const auto& mc = cfg.metric_config;
  auto metric_value = [&](const std::string& name, const std::string& y,
                          const std::string& r) -> double {
    if (name == "bleu") return metrics::bleu(y, r, mc).value;
    if (name == "rouge_l") return metrics::rouge_l(y, r, mc).value;
    if (name == "meteor") return metrics::meteor(y, r, mc).value;
    return metrics::embed_f1(y, r, embedder, mc).value;
  };

  const bool scoring = manifest.task_kind == dataset::TaskKind::Scoring;
  std::vector<nlohmann::json> records(items.size());
  std::atomic<int> failures{0};
  gw->parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto& inst = instances[item.instance];
    nlohmann::json rec{{"id", inst.id}, {"rubric", item.rubric.name}, {"error", nullptr}};
    try {
      const auto ref = refs.lookup(inst, item.rubric.name);
      if (!ref) throw std::runtime_error("no reference available for this item");
      nlohmann::json per_metric = nlohmann::json::object();
      nlohmann::json similarity;  // null unless embed_f1 runs
      if (scoring) {
        for (const auto& name : cfg.metric_set) {
          const double v = metric_value(name, inst.responses[0], ref->text);
          per_metric[name] = {{"value", v}};
          if (name == "embed_f1") similarity = v;
        }
      } else {
        std::vector<Preference> votes;
        for (const auto& name : cfg.metric_set) {
          const double s1 = metric_value(name, inst.responses[0], ref->text);
          const double s2 = metric_value(name, inst.responses[1], ref->text);
          const Preference pref = metrics::prefer_by_scores(s1, s2, mc.tie_epsilon);
          votes.push_back(pref);
          per_metric[name] = {{"s1", s1}, {"s2", s2}, {"preference", std::string(to_string(pref))}};
          if (name == "embed_f1") similarity = (s1 + s2) / 2.0;
        }
        rec["majority"] = std::string(to_string(metrics::majority_vote(votes)));
      }
      rec["metrics"] = per_metric;
      rec["similarity"] = similarity;
    } catch (const std::exception& e) {
      rec["error"] = std::string(e.what());
      failures.fetch_add(1);
    }
    records[i] = std::move(rec);
  });

  nlohmann::json inputs{{"dataset", manifest.name},
                        {"dataset_digest", file_digest(manifest.path)},
                        {"config_fingerprint", cfg.fingerprint()},
                        {"metric_fingerprint", mc.fingerprint()},
                        {"metrics", cfg.metric_set}};
  inputs["references_digest"] = upstream_digest.empty() ? nlohmann::json() : nlohmann::json(upstream_digest);
  nlohmann::json summary{{"items", items.size()}, {"failures", failures.load()}};

  StageResult res;
  res.total = static_cast<int>(items.size());
  res.failures = failures.load();
  res.artifact = cfg.out_dir / "metric_verdicts.jsonl";
  res.digest = write_artifact(res.artifact, "metric_verdicts", inputs, summary, records);
  return res;
}

struct MetaInputs {
  std::optional<std::filesystem::path> verdicts;
  std::optional<std::filesystem::path> swap_verdicts;
  std::optional<std::filesystem::path> metric_verdicts;
  std::optional<std::filesystem::path> ref_verdicts;   // for effectiveness buckets
  std::optional<std::filesystem::path> free_verdicts;  // for effectiveness buckets
};

struct MetaResult {
  std::vector<meta::MetaReport> reports;
  std::filesystem::path json_path;
  std::filesystem::path markdown_path;
  int gold_ties_dropped = 0;
};

namespace detail {

struct GoldIndex {
  // pairwise
  std::map<std::string, Preference> preference;  // id -> gold (ties included)
  // scoring
  std::map<std::string, double> score;  // item_key(id, rubric) -> gold
  bool scoring = false;

  static GoldIndex build(const dataset::DatasetManifest& manifest,
                         const std::vector<EvalInstance>& instances) {
    GoldIndex g;
    g.scoring = manifest.task_kind == dataset::TaskKind::Scoring;
    for (const auto& inst : instances) {
      if (g.scoring) {
        for (const auto& [rubric, value] : std::get<GoldScores>(inst.gold))
          g.score[item_key(inst.id, rubric)] = value;
      } else {
        g.preference[inst.id] = std::get<Preference>(inst.gold);
      }
    }
    return g;
  }
};

inline Preference record_preference(const nlohmann::json& rec) {
  if (rec.value("abstained", false)) return Preference::Tie;
  return *parse_preference(rec.at("verdict").at("preference").get<std::string>());
}

// Accuracy of one verdict artifact against pairwise gold. Gold ties are
// dropped from the denominator; abstentions predict Tie and score
// tie_credit. Unknown ids are join errors.
inline std::pair<double, int> pairwise_accuracy(const std::vector<nlohmann::json>& records,
                                                const GoldIndex& gold, double tie_credit) {
  std::vector<Preference> preds, golds;
  for (const auto& rec : records) {
    if (!rec.at("error").is_null()) continue;
    const auto id = rec.at("id").get<std::string>();
    auto it = gold.preference.find(id);
    if (it == gold.preference.end())
      throw meta::JoinError("verdict id not present in dataset: " + id);
    if (it->second == Preference::Tie) continue;  // tie-filtered
    preds.push_back(record_preference(rec));
    golds.push_back(it->second);
  }
  if (preds.empty()) throw meta::EmptyAfterExclusion("no joinable pairwise verdicts");
  return {meta::accuracy(preds, golds, tie_credit), static_cast<int>(preds.size())};
}

// Per-rubric correlation triples of one scoring artifact against gold.
inline std::pair<std::map<std::string, meta::CorrTriple>, int> scoring_correlations(
    const std::vector<nlohmann::json>& records, const GoldIndex& gold) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_rubric;
  int n = 0;
  for (const auto& rec : records) {
    if (!rec.at("error").is_null()) continue;
    if (rec.value("abstained", false)) continue;  // excluded from correlation
    if (!rec.contains("verdict") || rec.at("verdict").is_null()) continue;
    const auto id = rec.at("id").get<std::string>();
    const auto rubric = rec.at("rubric").get<std::string>();
    auto it = gold.score.find(item_key(id, rubric));
    if (it == gold.score.end())
      throw meta::JoinError("verdict (id, rubric) not present in dataset: " + id + "/" + rubric);
    by_rubric[rubric].first.push_back(
        static_cast<double>(rec.at("verdict").at("score").get<int>()));
    by_rubric[rubric].second.push_back(it->second);
    ++n;
  }
  std::map<std::string, meta::CorrTriple> out;
  for (auto& [rubric, cols] : by_rubric) {
    meta::CorrTriple t;
    if (cols.first.size() >= 2) {
      t.tau = meta::kendall(cols.first, cols.second);
      t.rho = meta::spearman(cols.first, cols.second);
      t.r = meta::pearson(cols.first, cols.second);
    }
    out[rubric] = t;
  }
  return {std::move(out), n};
}

}  // namespace detail

/// Joins artifacts with the gold labels and emits agreement reports:
/// correlations or accuracy per evaluator, flip rate when swap data is
/// present, and similarity-bucketed effectiveness when both a
/// reference-based and a reference-free run are supplied.
inline MetaResult cmd_meta(const RunConfig& cfg, const MetaInputs& in) {
  auto [manifest, lr] = detail::load_dataset(cfg);
  const auto gold = detail::GoldIndex::build(manifest, lr.instances);
  const bool scoring = gold.scoring;

  int ties_dropped = 0;
  if (!scoring) {
    for (const auto& [id, pref] : gold.preference) {
      (void)id;
      if (pref == Preference::Tie) ++ties_dropped;
    }
  }

  std::vector<meta::MetaReport> reports;
  nlohmann::json input_digests = nlohmann::json::object();

  auto base_report = [&](const std::string& evaluator) {
    meta::MetaReport rep;
    rep.task = manifest.name;
    rep.evaluator = evaluator;
    rep.config_fingerprint = cfg.fingerprint();
    return rep;
  };

  // All-degenerate rubric sets leave the averages undefined in the
  // report; undefined is data here, not a run failure.
  auto fill_averages = [](meta::MetaReport& rep) {
    if (rep.per_rubric.empty()) return;
    try {
      const auto avg = meta::per_rubric_average(rep.per_rubric);
      rep.kendall_tau = avg.tau;
      rep.spearman_rho = avg.rho;
      rep.pearson_r = avg.r;
    } catch (const meta::AllDegenerate&) {
    }
  };

  if (in.verdicts) {
    const auto art = read_artifact(*in.verdicts, "verdicts");
    input_digests["verdicts"] = art.digest;
    auto rep = base_report(art.header.at("inputs").at("mode").get<std::string>());
    if (scoring) {
      auto [per_rubric, n] = detail::scoring_correlations(art.records, gold);
      rep.per_rubric = std::move(per_rubric);
      rep.n = n;
      fill_averages(rep);
    } else {
      auto [acc, n] = detail::pairwise_accuracy(art.records, gold, cfg.tie_credit);
      rep.accuracy = acc;
      rep.n = n;
    }
    reports.push_back(std::move(rep));
  }

  if (in.swap_verdicts) {
    const auto art = read_artifact(*in.swap_verdicts, "swap_verdicts");
    input_digests["swap_verdicts"] = art.digest;
    std::vector<meta::SwapRecord> swaps;
    for (const auto& rec : art.records) {
      if (!rec.at("error").is_null()) continue;
      swaps.push_back({rec.at("consistent").get<bool>(), rec.at("excluded").get<bool>()});
    }
    const double flips = meta::flip_rate(swaps);
    const std::string mode = art.header.at("inputs").at("mode").get<std::string>();
    bool attached = false;
    for (auto& rep : reports) {
      if (rep.evaluator == mode) {
        rep.flip_rate = flips;
        attached = true;
        break;
      }
    }
    if (!attached) {
      auto rep = base_report(mode);
      rep.flip_rate = flips;
      rep.n = static_cast<int>(swaps.size());
      reports.push_back(std::move(rep));
    }
  }

  if (in.metric_verdicts) {
    const auto art = read_artifact(*in.metric_verdicts, "metric_verdicts");
    input_digests["metric_verdicts"] = art.digest;
    const auto metric_names = art.header.at("inputs").at("metrics").get<std::vector<std::string>>();
    if (scoring) {
      for (const auto& name : metric_names) {
        auto rep = base_report(name);
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_rubric;
        int n = 0;
        for (const auto& rec : art.records) {
          if (!rec.at("error").is_null()) continue;
          const auto id = rec.at("id").get<std::string>();
          const auto rubric = rec.at("rubric").get<std::string>();
          auto it = gold.score.find(detail::item_key(id, rubric));
          if (it == gold.score.end())
            throw meta::JoinError("metric record not present in dataset: " + id + "/" + rubric);
          by_rubric[rubric].first.push_back(rec.at("metrics").at(name).at("value").get<double>());
          by_rubric[rubric].second.push_back(it->second);
          ++n;
        }
        for (auto& [rubric, cols] : by_rubric) {
          meta::CorrTriple t;
          if (cols.first.size() >= 2) {
            t.tau = meta::kendall(cols.first, cols.second);
            t.rho = meta::spearman(cols.first, cols.second);
            t.r = meta::pearson(cols.first, cols.second);
          }
          rep.per_rubric[rubric] = t;
        }
        rep.n = n;
        fill_averages(rep);
        reports.push_back(std::move(rep));
      }
    } else {
      auto column_accuracy = [&](auto&& pref_of, const std::string& evaluator) {
        std::vector<Preference> preds, golds;
        for (const auto& rec : art.records) {
          if (!rec.at("error").is_null()) continue;
          const auto id = rec.at("id").get<std::string>();
          auto it = gold.preference.find(id);
          if (it == gold.preference.end())
            throw meta::JoinError("metric record id not present in dataset: " + id);
          if (it->second == Preference::Tie) continue;
          preds.push_back(pref_of(rec));
          golds.push_back(it->second);
        }
        auto rep = base_report(evaluator);
        if (!preds.empty()) {
          rep.accuracy = meta::accuracy(preds, golds, cfg.tie_credit);
          rep.n = static_cast<int>(preds.size());
        }
        reports.push_back(std::move(rep));
      };
      for (const auto& name : metric_names) {
        column_accuracy(
            [&name](const nlohmann::json& rec) {
              return *parse_preference(
                  rec.at("metrics").at(name).at("preference").get<std::string>());
            },
            name);
      }
      column_accuracy(
          [](const nlohmann::json& rec) {
            return *parse_preference(rec.at("majority").get<std::string>());
          },
          "majority_vote");
    }
  }

  if (in.ref_verdicts && in.free_verdicts) {
    if (scoring)
      throw ConfigError("effectiveness buckets are defined for pairwise datasets");
    if (!in.metric_verdicts)
      throw ConfigError("effectiveness buckets need the metric artifact for similarities");
    const auto ref_art = read_artifact(*in.ref_verdicts, "verdicts");
    const auto free_art = read_artifact(*in.free_verdicts, "verdicts");
    const auto sim_art = read_artifact(*in.metric_verdicts, "metric_verdicts");
    input_digests["ref_verdicts"] = ref_art.digest;
    input_digests["free_verdicts"] = free_art.digest;

    std::map<std::string, Preference> ref_pred, free_pred;
    for (const auto& rec : ref_art.records)
      if (rec.at("error").is_null()) ref_pred[rec.at("id").get<std::string>()] = detail::record_preference(rec);
    for (const auto& rec : free_art.records)
      if (rec.at("error").is_null()) free_pred[rec.at("id").get<std::string>()] = detail::record_preference(rec);

    std::vector<double> sims;
    std::vector<bool> correct_ref, correct_free;
    for (const auto& rec : sim_art.records) {
      if (!rec.at("error").is_null() || rec.at("similarity").is_null()) continue;
      const auto id = rec.at("id").get<std::string>();
      auto g = gold.preference.find(id);
      if (g == gold.preference.end() || g->second == Preference::Tie) continue;
      auto rit = ref_pred.find(id);
      auto fit = free_pred.find(id);
      if (rit == ref_pred.end() || fit == free_pred.end()) continue;
      sims.push_back(rec.at("similarity").get<double>());
      correct_ref.push_back(rit->second == g->second);
      correct_free.push_back(fit->second == g->second);
    }
    if (sims.empty())
      throw ConfigError("no instances with similarity plus both verdict columns");
    auto rep = base_report(ref_art.header.at("inputs").at("mode").get<std::string>() +
                           std::string(" vs ref-free"));
    rep.n = static_cast<int>(sims.size());
    rep.buckets = meta::effectiveness_buckets(sims, correct_ref, correct_free, cfg.buckets);
    reports.push_back(std::move(rep));
  }

  if (reports.empty()) throw ConfigError("meta needs at least one artifact to analyze");

  nlohmann::json doc;
  doc["inputs"] = input_digests;
  doc["dataset"] = manifest.name;
  doc["dataset_digest"] = file_digest(manifest.path);
  doc["config_fingerprint"] = cfg.fingerprint();
  doc["gold_ties_dropped"] = ties_dropped;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rep : reports) arr.push_back(rep.to_json());
  doc["reports"] = arr;

  MetaResult result;
  result.reports = std::move(reports);
  result.gold_ties_dropped = ties_dropped;
  std::filesystem::create_directories(cfg.out_dir);
  result.json_path = cfg.out_dir / "meta_report.json";
  result.markdown_path = cfg.out_dir / "meta_report.md";
  {
    std::ofstream out(result.json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + result.json_path.string());
    out << canonical_dump(doc) << '\n';
  }
  {
    std::ofstream out(result.markdown_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + result.markdown_path.string());
    out << meta::render_markdown(result.reports);
  }
  return result;
}

}  // namespace reveval::pipeline
