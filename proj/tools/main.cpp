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

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reveval/dataset.hpp"
#include "reveval/gateway_http.hpp"
#include "reveval/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 1;
constexpr int kExitConfigError = 2;

struct CliOptions {
  std::string config_path;
  std::string dataset;
  std::string mode;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool swap = false;
  bool mock = false;
  std::vector<double> temps;
  std::vector<std::string> metrics;
  int buckets = 0;
  std::string out;
  std::string cache;
  std::string templates;
  std::string refs;  // references artifact for judge/metric-eval
  // meta inputs
  std::string verdicts, swap_verdicts, metric_verdicts, ref_verdicts, free_verdicts;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "run configuration JSON file");
  cmd->add_option("--dataset", opt.dataset, "dataset manifest path");
  cmd->add_option("--mode", opt.mode, "judge mode: ref-free | ref-based | adapted");
  cmd->add_option("--seed", opt.seed, "run seed")->each([&opt](const std::string&) {
    opt.seed_set = true;
  });
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--cache", opt.cache, "transcript cache file");
  cmd->add_option("--templates", opt.templates, "prompt template directory");
  cmd->add_flag("--mock", opt.mock, "force the deterministic mock provider");
}

reveval::pipeline::RunConfig make_config(const CliOptions& opt) {
  using reveval::pipeline::ConfigError;
  using reveval::pipeline::RunConfig;
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg = RunConfig::from_file(opt.config_path);
  if (!opt.dataset.empty()) cfg.dataset_manifest = opt.dataset;
  if (!opt.mode.empty()) {
    auto m = reveval::judge::parse_judge_mode(opt.mode);
    if (!m) throw ConfigError("unknown mode: " + opt.mode);
    cfg.mode = *m;
  }
  if (opt.seed_set) {
    cfg.seed = opt.seed;
    cfg.seed_set = true;
  }
  if (opt.swap) cfg.swap = true;
  if (!opt.temps.empty()) {
    cfg.cycle_temps = opt.temps;
    cfg.multi_cycle = true;
  }
  if (!opt.metrics.empty()) cfg.metric_set = opt.metrics;
  if (opt.buckets > 0) cfg.buckets = opt.buckets;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (!opt.cache.empty()) cfg.cache_path = opt.cache;
  if (!opt.templates.empty()) cfg.template_dir = opt.templates;
  if (opt.mock) cfg.provider.kind = "mock";
  return cfg;
}

std::shared_ptr<reveval::gateway::Gateway> make_gateway(const reveval::pipeline::RunConfig& cfg) {
  using namespace reveval;
  if (cfg.provider.kind == "http") {
    gateway::HttpProvider::Options ho;
    ho.endpoint = cfg.provider.endpoint;
    ho.credential_env = cfg.provider.credential_env;
    ho.embed_model = cfg.provider.embed_model;
    ho.timeout_ms = cfg.provider.timeout_ms;
    ho.verbose = cfg.provider.verbose;
    if (ho.endpoint.empty())
      throw pipeline::ConfigError("http provider requires provider.endpoint in the config");
    return pipeline::build_gateway(cfg, std::make_shared<gateway::HttpProvider>(ho));
  }
  return pipeline::build_gateway(cfg);
}

int stage_exit(const reveval::pipeline::StageResult& res, const char* what) {
  std::printf("%s: %d item(s), %d failure(s) -> %s\n", what, res.total, res.failures,
              res.artifact.string().c_str());
  std::printf("artifact digest: %s\n", res.digest.c_str());
  return res.failures == 0 ? kExitOk : kExitPartialFailure;
}

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

int run_validate(const CliOptions& opt) {
  using namespace reveval;
  auto cfg = make_config(opt);
  if (cfg.dataset_manifest.empty())
    throw pipeline::ConfigError("validate requires --dataset");
  auto manifest = dataset::DatasetManifest::load(cfg.dataset_manifest);
  auto lr = dataset::load(manifest);
  std::printf("%s: %zu instance(s), %zu schema error(s)\n", manifest.name.c_str(),
              lr.instances.size(), lr.errors.size());
  for (const auto& e : lr.errors)
    std::printf("  line %d [%s] %s\n", e.line, e.field.c_str(), e.message.c_str());
  if (manifest.task_kind == dataset::TaskKind::Pairwise) {
    auto [kept, dropped] = dataset::filter_ties(lr.instances);
    std::printf("tie filter would keep %zu and drop %d instance(s)\n", kept.size(), dropped);
  }
  return lr.ok() ? kExitOk : kExitConfigError;
}

int run_cache(const std::string& action, const std::string& cache_path) {
  using namespace reveval;
  if (cache_path.empty()) throw pipeline::ConfigError("cache command requires --cache");
  if (action == "inspect") {
    gateway::TranscriptCache cache{std::filesystem::path(cache_path)};
    std::printf("cache %s: %zu unique transcript(s), %ju byte(s)\n", cache_path.c_str(),
                cache.size(),
                static_cast<std::uintmax_t>(std::filesystem::file_size(cache_path)));
    return kExitOk;
  }
  if (action == "gc") {
    const auto kept = gateway::TranscriptCache::gc(cache_path);
    std::printf("cache %s: compacted to %zu record(s)\n", cache_path.c_str(), kept);
    return kExitOk;
  }
  throw pipeline::ConfigError("cache action must be inspect or gc");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"revision-based evaluation harness"};
  app.require_subcommand(1);
  CliOptions opt;

  auto* revise = app.add_subcommand(
      "revise", "generate references (adapted revisions or direct responses)");
  add_common_flags(revise, opt);

  auto* judge_cmd = app.add_subcommand("judge", "run the LLM judge over a dataset");
  add_common_flags(judge_cmd, opt);
  judge_cmd->add_flag("--swap", opt.swap, "also judge with response positions swapped");
  judge_cmd->add_option("--temps", opt.temps, "multi-cycle voting temperatures");
  judge_cmd->add_option("--refs", opt.refs, "references artifact from a revise run");

  auto* metric_cmd = app.add_subcommand("metric-eval", "score responses with classic metrics");
  add_common_flags(metric_cmd, opt);
  metric_cmd->add_option("--metrics", opt.metrics, "metric names (bleu rouge_l meteor embed_f1)");
  metric_cmd->add_option("--refs", opt.refs, "references artifact from a revise run");

  auto* meta_cmd = app.add_subcommand("meta", "meta-evaluate artifacts against gold labels");
  add_common_flags(meta_cmd, opt);
  meta_cmd->add_option("--buckets", opt.buckets, "similarity bucket count");
  meta_cmd->add_option("--verdicts", opt.verdicts, "judge verdict artifact");
  meta_cmd->add_option("--swap-verdicts", opt.swap_verdicts, "swap verdict artifact");
  meta_cmd->add_option("--metric-verdicts", opt.metric_verdicts, "metric verdict artifact");
  meta_cmd->add_option("--ref-verdicts", opt.ref_verdicts,
                       "reference-based verdicts (effectiveness buckets)");
  meta_cmd->add_option("--free-verdicts", opt.free_verdicts,
                       "reference-free verdicts (effectiveness buckets)");

  auto* validate_cmd = app.add_subcommand("validate", "lint a dataset manifest and its records");
  add_common_flags(validate_cmd, opt);

  std::string cache_action;
  std::string cache_file;
  auto* cache_cmd = app.add_subcommand("cache", "inspect or compact a transcript cache");
  cache_cmd->add_option("action", cache_action, "inspect | gc")->required();
  cache_cmd->add_option("--cache", cache_file, "transcript cache file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (revise->parsed()) {
      auto cfg = make_config(opt);
      return stage_exit(reveval::pipeline::cmd_revise(cfg, make_gateway(cfg)), "revise");
    }
    if (judge_cmd->parsed()) {
      auto cfg = make_config(opt);
      return stage_exit(
          reveval::pipeline::cmd_judge(cfg, opt_path(opt.refs), make_gateway(cfg)), "judge");
    }
    if (metric_cmd->parsed()) {
      auto cfg = make_config(opt);
      return stage_exit(
          reveval::pipeline::cmd_metric_eval(cfg, opt_path(opt.refs), make_gateway(cfg)),
          "metric-eval");
    }
    if (meta_cmd->parsed()) {
      auto cfg = make_config(opt);
      reveval::pipeline::MetaInputs inputs;
      inputs.verdicts = opt_path(opt.verdicts);
      inputs.swap_verdicts = opt_path(opt.swap_verdicts);
      inputs.metric_verdicts = opt_path(opt.metric_verdicts);
      inputs.ref_verdicts = opt_path(opt.ref_verdicts);
      inputs.free_verdicts = opt_path(opt.free_verdicts);
      auto result = reveval::pipeline::cmd_meta(cfg, inputs);
      std::printf("meta: %zu report(s) -> %s\n", result.reports.size(),
                  result.json_path.string().c_str());
      for (const auto& rep : result.reports)
        std::printf("  %s (n=%d)\n", rep.evaluator.c_str(), rep.n);
      return kExitOk;
    }
    if (validate_cmd->parsed()) return run_validate(opt);
    if (cache_cmd->parsed()) return run_cache(cache_action, cache_file);
  } catch (const reveval::pipeline::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfigError;
  } catch (const reveval::dataset::IoError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  }
  return kExitOk;
}
