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

#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "reveval/pipeline.hpp"

using namespace reveval;
using pipeline::MetaInputs;
using pipeline::RunConfig;

namespace {

RunConfig base_config(const std::filesystem::path& manifest, const std::filesystem::path& out,
                      const std::filesystem::path& cache = {}) {
  RunConfig cfg;
  cfg.dataset_manifest = manifest;
  cfg.out_dir = out;
  cfg.cache_path = cache;
  cfg.seed = 7;
  cfg.seed_set = true;
  cfg.template_dir = REVEVAL_TEMPLATE_DIR;
  cfg.provider.concurrency = 4;
  cfg.provider.backoff_ms = 0;
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("revise emits one reference per pairwise instance, reproducibly") {
    testutil::TempDir dir("pl_revise");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(12), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");

    const auto first = pipeline::cmd_revise(cfg);
    CHECK(first.total == 12);
    CHECK(first.failures == 0);

    // warm-cache rerun in a separate directory is byte-identical
    cfg.out_dir = dir.path() / "out2";
    const auto second = pipeline::cmd_revise(cfg);
    CHECK(second.digest == first.digest);
    CHECK(testutil::read_file(first.artifact) == testutil::read_file(second.artifact));

    const auto art = pipeline::read_artifact(first.artifact, "references");
    CHECK(art.records.size() == 12);
    for (const auto& rec : art.records) {
      CHECK(rec.at("error").is_null());
      CHECK(rec.at("reference").at("provenance") == "response-adapted");
      CHECK_FALSE(rec.at("choice").is_null());
    }
    CHECK(art.header.at("inputs").at("provenance") == "response-adapted");
    CHECK(art.header.at("inputs").at("seed") == 7);
  }

  TEST_CASE("revise requires a seed in adapted mode and rejects ref-free") {
    testutil::TempDir dir("pl_seed");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(2), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.seed_set = false;
    CHECK_THROWS_AS(pipeline::cmd_revise(cfg), pipeline::ConfigError);
    cfg.seed_set = true;
    cfg.mode = judge::JudgeMode::RefFree;
    CHECK_THROWS_AS(pipeline::cmd_revise(cfg), pipeline::ConfigError);
  }

  TEST_CASE("revise in ref-based mode emits direct responses") {
    testutil::TempDir dir("pl_direct");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(4), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.mode = judge::JudgeMode::RefBased;
    const auto res = pipeline::cmd_revise(cfg);
    const auto art = pipeline::read_artifact(res.artifact, "references");
    for (const auto& rec : art.records) {
      CHECK(rec.at("reference").at("provenance") == "direct-response");
      CHECK(rec.at("choice").is_null());
    }
  }

  TEST_CASE("scoring datasets revise one reference per (instance, rubric)") {
    testutil::TempDir dir("pl_scoring");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_scoring(5), "scores", true);
    auto cfg = base_config(manifest, dir.path() / "out");
    const auto res = pipeline::cmd_revise(cfg);
    CHECK(res.total == 10);  // 5 instances x 2 rubrics
    const auto art = pipeline::read_artifact(res.artifact, "references");
    std::set<std::string> rubrics;
    for (const auto& rec : art.records) rubrics.insert(rec.at("rubric").get<std::string>());
    CHECK(rubrics == std::set<std::string>{"fluency", "coherence"});
  }

  TEST_CASE("judge in adapted mode consumes the revision artifact and chains digests") {
    testutil::TempDir dir("pl_judge");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(10), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    const auto rev = pipeline::cmd_revise(cfg);
    const auto jd = pipeline::cmd_judge(cfg, rev.artifact);
    CHECK(jd.failures == 0);
    const auto art = pipeline::read_artifact(jd.artifact, "verdicts");
    CHECK(art.records.size() == 10);
    CHECK(art.header.at("inputs").at("references_digest") == rev.digest);
    CHECK(art.header.at("inputs").at("mode") == "adapted");
    for (const auto& rec : art.records) {
      CHECK(rec.at("error").is_null());
      const auto pref = rec.at("verdict").at("preference").get<std::string>();
      CHECK((pref == "first" || pref == "second" || pref == "tie"));
    }
  }

  TEST_CASE("judge mode/artifact mismatches are configuration errors") {
    testutil::TempDir dir("pl_judge_err");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(3), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");

    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);

    cfg.mode = judge::JudgeMode::RefBased;
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);

    // direct-response references do not satisfy adapted mode
    const auto direct = [&] {
      auto c = cfg;
      c.mode = judge::JudgeMode::RefBased;
      return pipeline::cmd_revise(c);
    }();
    cfg.mode = judge::JudgeMode::AdaptedRef;
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, direct.artifact), pipeline::ConfigError);

    // but they do satisfy ref-based mode
    cfg.mode = judge::JudgeMode::RefBased;
    CHECK_NOTHROW(pipeline::cmd_judge(cfg, direct.artifact));
  }

  TEST_CASE("ref-free judging needs no artifact; swap emits paired verdicts") {
    testutil::TempDir dir("pl_swap");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(8), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.mode = judge::JudgeMode::RefFree;
    cfg.swap = true;
    const auto res = pipeline::cmd_judge(cfg, std::nullopt);
    const auto art = pipeline::read_artifact(res.artifact, "swap_verdicts");
    CHECK(art.records.size() == 8);
    for (const auto& rec : art.records) {
      CHECK(rec.contains("forward"));
      CHECK(rec.contains("swapped"));
      CHECK(rec.contains("consistent"));
    }
  }

  TEST_CASE("multi-cycle judging votes across the configured temperatures") {
    testutil::TempDir dir("pl_cycles");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(6), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.mode = judge::JudgeMode::RefFree;
    cfg.multi_cycle = true;
    cfg.cycle_temps = {0.0, 0.3, 0.7};
    const auto res = pipeline::cmd_judge(cfg, std::nullopt);
    CHECK(res.failures == 0);
    const auto art = pipeline::read_artifact(res.artifact, "verdicts");
    CHECK(art.header.at("inputs").at("multi_cycle") == true);
    for (const auto& rec : art.records) CHECK(rec.contains("verdict"));

    cfg.seed_set = false;
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);
    cfg.seed_set = true;
    cfg.cycle_temps = {};
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);
  }

  TEST_CASE("metric-eval produces per-metric columns plus the majority vote") {
    testutil::TempDir dir("pl_metric");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(9), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    const auto rev = pipeline::cmd_revise(cfg);

    cfg.metric_set = {"bleu", "rouge_l", "meteor"};
    const auto res = pipeline::cmd_metric_eval(cfg, rev.artifact);
    CHECK(res.failures == 0);
    const auto art = pipeline::read_artifact(res.artifact, "metric_verdicts");
    for (const auto& rec : art.records) {
      CHECK(rec.at("metrics").size() == 3);
      CHECK(rec.at("metrics").contains("bleu"));
      CHECK(rec.contains("majority"));
      CHECK(rec.at("similarity").is_null());  // no embed_f1 in the set
    }

    cfg.metric_set = {};
    CHECK_THROWS_AS(pipeline::cmd_metric_eval(cfg, rev.artifact), pipeline::ConfigError);
    cfg.metric_set = {"unknown_metric"};
    CHECK_THROWS_AS(pipeline::cmd_metric_eval(cfg, rev.artifact), pipeline::ConfigError);
  }

  TEST_CASE("metric-eval records similarity when embed_f1 runs") {
    testutil::TempDir dir("pl_metric_sim");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(5), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    const auto rev = pipeline::cmd_revise(cfg);
    const auto res = pipeline::cmd_metric_eval(cfg, rev.artifact);
    const auto art = pipeline::read_artifact(res.artifact, "metric_verdicts");
    for (const auto& rec : art.records) {
      REQUIRE_FALSE(rec.at("similarity").is_null());
      const double s = rec.at("similarity").get<double>();
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }

  TEST_CASE("metric-eval can use human references from the dataset") {
    testutil::TempDir dir("pl_metric_human");
    auto instances = testutil::synthetic_pairwise(4);
    for (auto& inst : instances)
      inst.provided_references.push_back({inst.responses[0], Provenance::Human, std::nullopt});
    const auto manifest = testutil::write_dataset(dir.path(), instances, "pairs", false, true);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.metric_set = {"rouge_l"};
    const auto res = pipeline::cmd_metric_eval(cfg, std::nullopt);
    CHECK(res.failures == 0);
    const auto art = pipeline::read_artifact(res.artifact, "metric_verdicts");
    // the reference IS response one, so rouge_l must prefer it every time
    for (const auto& rec : art.records)
      CHECK(rec.at("metrics").at("rouge_l").at("preference") == "first");
  }

  TEST_CASE("meta: pairwise accuracy with tie filtering and flip rate") {
    testutil::TempDir dir("pl_meta");
    const auto instances = testutil::synthetic_pairwise(30);
    const auto manifest = testutil::write_dataset(dir.path(), instances, "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    cfg.mode = judge::JudgeMode::RefFree;

    const auto verdicts = pipeline::cmd_judge(cfg, std::nullopt);
    auto swap_cfg = cfg;
    swap_cfg.swap = true;
    swap_cfg.out_dir = dir.path() / "out_swap";
    const auto swaps = pipeline::cmd_judge(swap_cfg, std::nullopt);

    MetaInputs inputs;
    inputs.verdicts = verdicts.artifact;
    inputs.swap_verdicts = swaps.artifact;
    const auto meta_res = pipeline::cmd_meta(cfg, inputs);
    REQUIRE(meta_res.reports.size() == 1);
    const auto& rep = meta_res.reports[0];
    CHECK(rep.evaluator == "ref-free");
    REQUIRE(rep.accuracy.has_value());
    CHECK(*rep.accuracy >= 0.0);
    CHECK(*rep.accuracy <= 1.0);
    REQUIRE(rep.flip_rate.has_value());
    int ties = 0;
    for (const auto& inst : instances)
      if (std::get<Preference>(inst.gold) == Preference::Tie) ++ties;
    CHECK(meta_res.gold_ties_dropped == ties);
    CHECK(rep.n == 30 - ties);
    CHECK(std::filesystem::exists(meta_res.json_path));
    CHECK(std::filesystem::exists(meta_res.markdown_path));
  }

  TEST_CASE("meta: scoring correlations per rubric with averages") {
    testutil::TempDir dir("pl_meta_score");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_scoring(12), "scores", true);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    const auto rev = pipeline::cmd_revise(cfg);
    const auto verdicts = pipeline::cmd_judge(cfg, rev.artifact);

    MetaInputs inputs;
    inputs.verdicts = verdicts.artifact;
    const auto meta_res = pipeline::cmd_meta(cfg, inputs);
    REQUIRE(meta_res.reports.size() == 1);
    const auto& rep = meta_res.reports[0];
    CHECK(rep.per_rubric.size() == 2);
    CHECK(rep.per_rubric.count("fluency") == 1);
    CHECK(rep.per_rubric.count("coherence") == 1);
    CHECK(rep.n == 24);
  }

  TEST_CASE("swap and multi-cycle are rejected on scoring datasets") {
    testutil::TempDir dir("pl_swap_scoring");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_scoring(3), "scores", true);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.mode = judge::JudgeMode::RefFree;
    cfg.swap = true;
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);
    cfg.swap = false;
    cfg.multi_cycle = true;
    CHECK_THROWS_AS(pipeline::cmd_judge(cfg, std::nullopt), pipeline::ConfigError);
  }

  TEST_CASE("metric-eval and meta handle scoring datasets per rubric") {
    testutil::TempDir dir("pl_metric_scoring");

    // adapted references from the identity mock equal the responses, so
    // every metric column is constant 1.0: averages must come out
    // undefined rather than fail the run
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_scoring(8), "scores", true);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    const auto rev = pipeline::cmd_revise(cfg);
    cfg.metric_set = {"bleu", "rouge_l"};
    const auto mv = pipeline::cmd_metric_eval(cfg, rev.artifact);
    CHECK(mv.failures == 0);
    CHECK(mv.total == 16);  // 8 instances x 2 rubrics
    const auto art = pipeline::read_artifact(mv.artifact, "metric_verdicts");
    for (const auto& rec : art.records) {
      CHECK(rec.at("metrics").at("bleu").contains("value"));
      CHECK_FALSE(rec.at("metrics").at("bleu").contains("preference"));
    }
    pipeline::MetaInputs inputs;
    inputs.metric_verdicts = mv.artifact;
    const auto degenerate = pipeline::cmd_meta(cfg, inputs);
    REQUIRE(degenerate.reports.size() == 2);
    for (const auto& rep : degenerate.reports) {
      CHECK(rep.per_rubric.size() == 2);
      CHECK(rep.n == 16);
      CHECK_FALSE(rep.accuracy.has_value());
      CHECK_FALSE(rep.kendall_tau.has_value());
    }

    // human references with varying overlap produce defined correlations
    auto instances = testutil::synthetic_scoring(8);
    for (std::size_t i = 0; i < instances.size(); ++i) {
      auto tokens = metrics::tokenize(instances[i].responses[0]);
      std::string ref;
      for (std::size_t k = 0; k <= i && k < tokens.size(); ++k) {
        if (k) ref += ' ';
        ref += tokens[k];
      }
      ref += " filler tokens appended here";
      instances[i].provided_references.push_back({ref, Provenance::Human, std::nullopt});
    }
    const auto human_manifest =
        testutil::write_dataset(dir.path(), instances, "humanscores", true, true);
    auto hcfg = base_config(human_manifest, dir.path() / "out_h", dir.path() / "cache.jsonl");
    hcfg.metric_set = {"rouge_l"};
    const auto hmv = pipeline::cmd_metric_eval(hcfg, std::nullopt);
    CHECK(hmv.failures == 0);
    pipeline::MetaInputs hinputs;
    hinputs.metric_verdicts = hmv.artifact;
    const auto defined = pipeline::cmd_meta(hcfg, hinputs);
    REQUIRE(defined.reports.size() == 1);
    CHECK(defined.reports[0].per_rubric.size() == 2);
    // rouge values vary across instances, so correlations are defined
    CHECK(defined.reports[0].kendall_tau.has_value());
    CHECK(defined.reports[0].spearman_rho.has_value());
    CHECK(defined.reports[0].pearson_r.has_value());
  }

  TEST_CASE("meta: metric artifact yields one report per metric plus majority") {
    testutil::TempDir dir("pl_meta_metric");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(10), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");
    const auto rev = pipeline::cmd_revise(cfg);
    cfg.metric_set = {"bleu", "rouge_l"};
    const auto mv = pipeline::cmd_metric_eval(cfg, rev.artifact);

    MetaInputs inputs;
    inputs.metric_verdicts = mv.artifact;
    const auto meta_res = pipeline::cmd_meta(cfg, inputs);
    REQUIRE(meta_res.reports.size() == 3);  // bleu, rouge_l, majority_vote
    std::set<std::string> evaluators;
    for (const auto& rep : meta_res.reports) evaluators.insert(rep.evaluator);
    CHECK(evaluators == std::set<std::string>{"bleu", "rouge_l", "majority_vote"});
  }

  TEST_CASE("meta: effectiveness buckets join similarities with both verdict sets") {
    testutil::TempDir dir("pl_meta_eff");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(20), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out", dir.path() / "cache.jsonl");

    const auto rev = pipeline::cmd_revise(cfg);
    const auto ref_verdicts = pipeline::cmd_judge(cfg, rev.artifact);
    auto free_cfg = cfg;
    free_cfg.mode = judge::JudgeMode::RefFree;
    free_cfg.out_dir = dir.path() / "out_free";
    const auto free_verdicts = pipeline::cmd_judge(free_cfg, std::nullopt);
    const auto mv = pipeline::cmd_metric_eval(cfg, rev.artifact);

    MetaInputs inputs;
    inputs.ref_verdicts = ref_verdicts.artifact;
    inputs.free_verdicts = free_verdicts.artifact;
    inputs.metric_verdicts = mv.artifact;
    cfg.buckets = 4;
    const auto meta_res = pipeline::cmd_meta(cfg, inputs);

    const meta::MetaReport* bucket_rep = nullptr;
    for (const auto& rep : meta_res.reports)
      if (rep.buckets) bucket_rep = &rep;
    REQUIRE(bucket_rep != nullptr);
    REQUIRE(bucket_rep->buckets->size() == 4);
    int total = 0;
    for (const auto& row : *bucket_rep->buckets) total += row.n;
    CHECK(total == bucket_rep->n);
  }

  TEST_CASE("partial provider outage: failures are listed, batch completes") {
    testutil::TempDir dir("pl_outage");
    auto instances = testutil::synthetic_pairwise(6);
    instances[3].instruction = "POISON this instruction";
    const auto manifest = testutil::write_dataset(dir.path(), instances, "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");

    struct PoisonProvider : gateway::Provider {
      gateway::MockProvider inner;
      std::string name() const override { return "poison"; }
      std::string complete(const gateway::CompletionRequest& req) override {
        for (const auto& m : req.messages)
          if (m.content.find("POISON") != std::string::npos)
            throw gateway::ProviderError("synthetic outage", false);
        return inner.complete(req);
      }
      std::vector<std::vector<double>> embed(const std::vector<std::string>& t) override {
        return inner.embed(t);
      }
    };
    auto gw = pipeline::build_gateway(cfg, std::make_shared<PoisonProvider>());
    const auto res = pipeline::cmd_revise(cfg, gw);
    CHECK(res.total == 6);
    CHECK(res.failures == 1);
    const auto art = pipeline::read_artifact(res.artifact, "references");
    int errors = 0;
    for (const auto& rec : art.records)
      if (!rec.at("error").is_null()) ++errors;
    CHECK(errors == 1);
    CHECK(art.header.at("summary").at("failures") == 1);
  }

  TEST_CASE("end-to-end determinism on the mock provider") {
    testutil::TempDir dir("pl_e2e");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(25), "pairs", false);

    auto run = [&](const std::filesystem::path& out, const std::filesystem::path& cache) {
      auto cfg = base_config(manifest, out, cache);
      const auto rev = pipeline::cmd_revise(cfg);
      const auto verdicts = pipeline::cmd_judge(cfg, rev.artifact);
      const auto mv = pipeline::cmd_metric_eval(cfg, rev.artifact);
      MetaInputs inputs;
      inputs.verdicts = verdicts.artifact;
      inputs.metric_verdicts = mv.artifact;
      const auto meta_res = pipeline::cmd_meta(cfg, inputs);
      return testutil::read_file(meta_res.json_path);
    };

    // run 1 cold cache, run 2 warm (same cache), run 3 fresh cache
    const auto a = run(dir.path() / "out_a", dir.path() / "cache.jsonl");
    const auto b = run(dir.path() / "out_b", dir.path() / "cache.jsonl");
    const auto c = run(dir.path() / "out_c", dir.path() / "cache2.jsonl");
    CHECK(a == b);
    CHECK(a == c);
    CHECK_FALSE(a.empty());
  }

  TEST_CASE("config file round-trip with fingerprint stability") {
    testutil::TempDir dir("pl_cfg");
    const auto cfg_path = dir.path() / "run.json";
    {
      std::ofstream out(cfg_path);
      out << R"({
        "mode": "adapted",
        "seed": 11,
        "metrics": ["bleu", "meteor"],
        "temps": [0.0, 0.3, 0.7],
        "buckets": 3,
        "tie_credit": 0.5,
        "provider": {"kind": "mock", "mock_seed": 4, "concurrency": 2}
      })";
    }
    const auto cfg = RunConfig::from_file(cfg_path);
    CHECK(cfg.mode == judge::JudgeMode::AdaptedRef);
    CHECK(cfg.seed == 11);
    CHECK(cfg.seed_set);
    CHECK(cfg.metric_set == std::vector<std::string>{"bleu", "meteor"});
    CHECK(cfg.buckets == 3);
    CHECK(cfg.tie_credit == 0.5);
    CHECK(cfg.provider.mock_seed == 4);

    const auto fp1 = cfg.fingerprint();
    CHECK(fp1 == RunConfig::from_file(cfg_path).fingerprint());
    auto changed = cfg;
    changed.seed = 12;
    CHECK(changed.fingerprint() != fp1);

    // unreadable / malformed files are configuration errors
    CHECK_THROWS_AS(RunConfig::from_file(dir.path() / "missing.json"), pipeline::ConfigError);
    std::ofstream(dir.path() / "bad.json") << "{not json";
    CHECK_THROWS_AS(RunConfig::from_file(dir.path() / "bad.json"), pipeline::ConfigError);
  }

  TEST_CASE("meta join failure: verdicts for unknown ids raise JoinError") {
    testutil::TempDir dir("pl_join");
    const auto manifest =
        testutil::write_dataset(dir.path(), testutil::synthetic_pairwise(4), "pairs", false);
    auto cfg = base_config(manifest, dir.path() / "out");
    cfg.mode = judge::JudgeMode::RefFree;
    const auto verdicts = pipeline::cmd_judge(cfg, std::nullopt);

    // re-point meta at a dataset missing those ids
    auto other_instances = testutil::synthetic_pairwise(4, 99);
    for (auto& inst : other_instances) inst.id = "different-" + inst.id;
    const auto other_manifest =
        testutil::write_dataset(dir.path(), other_instances, "otherpairs", false);
    auto meta_cfg = base_config(other_manifest, dir.path() / "out_meta");
    MetaInputs inputs;
    inputs.verdicts = verdicts.artifact;
    CHECK_THROWS_AS(pipeline::cmd_meta(meta_cfg, inputs), meta::JoinError);
  }

  TEST_CASE("dataset schema errors abort commands with a configuration error") {
    testutil::TempDir dir("pl_schema");
    const auto data = dir.path() / "bad.jsonl";
    std::ofstream(data) << "{broken\n";
    const auto manifest_path = dir.path() / "bad.manifest.json";
    std::ofstream(manifest_path)
        << R"({"name":"bad","kind":"pairwise","path":"bad.jsonl"})";
    auto cfg = base_config(manifest_path, dir.path() / "out");
    CHECK_THROWS_AS(pipeline::cmd_revise(cfg), pipeline::ConfigError);
  }
}
