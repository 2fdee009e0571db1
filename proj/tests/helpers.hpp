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

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "reveval/dataset.hpp"
#include "reveval/domain.hpp"
#include "reveval/gateway.hpp"
#include "reveval/json_canon.hpp"
#include "reveval/prompt.hpp"

#ifndef REVEVAL_TEMPLATE_DIR
#define REVEVAL_TEMPLATE_DIR "templates"
#endif

namespace testutil {

inline const reveval::prompt::TemplateRegistry& templates() {
  static const auto reg = reveval::prompt::TemplateRegistry::load_dir(REVEVAL_TEMPLATE_DIR);
  return reg;
}

/// A unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("reveval_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---- synthetic datasets ----

inline std::vector<reveval::EvalInstance> synthetic_pairwise(int n, unsigned seed = 1) {
  using namespace reveval;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, 25);
  std::uniform_int_distribution<int> len(4, 12);
  std::uniform_int_distribution<int> gold(0, 9);
  auto sentence = [&](int words) {
    std::string s;
    for (int i = 0; i < words; ++i) {
      if (i) s += ' ';
      s += "word" + std::to_string(word(rng));
    }
    return s;
  };
  std::vector<EvalInstance> out;
  for (int i = 0; i < n; ++i) {
    EvalInstance inst;
    inst.id = "pair-" + std::to_string(i);
    inst.instruction = "Write about topic " + std::to_string(i) + ".";
    inst.responses = {sentence(len(rng)), sentence(len(rng))};
    const int g = gold(rng);
    inst.gold = g < 5 ? Preference::First : (g < 9 ? Preference::Second : Preference::Tie);
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<reveval::EvalInstance> synthetic_scoring(int n, unsigned seed = 1) {
  using namespace reveval;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> word(0, 25);
  std::uniform_int_distribution<int> len(4, 12);
  std::uniform_real_distribution<double> score(1.0, 5.0);
  const std::vector<Rubric> rubrics{{"fluency", "reads naturally", 1, 5},
                                    {"coherence", "hangs together", 1, 5}};
  std::vector<EvalInstance> out;
  for (int i = 0; i < n; ++i) {
    EvalInstance inst;
    inst.id = "score-" + std::to_string(i);
    inst.instruction = "Continue the story " + std::to_string(i) + ".";
    inst.rubrics = rubrics;
    std::string s;
    for (int w = 0; w < len(rng); ++w) {
      if (w) s += ' ';
      s += "word" + std::to_string(word(rng));
    }
    inst.responses = {s};
    GoldScores scores;
    for (const auto& r : rubrics) scores[r.name] = std::round(score(rng) * 10.0) / 10.0;
    inst.gold = std::move(scores);
    out.push_back(std::move(inst));
  }
  return out;
}

/// Writes instances + a manifest into `dir`; returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                           const std::vector<reveval::EvalInstance>& instances,
                                           const std::string& name, bool scoring,
                                           bool has_human_references = false) {
  const auto data_path = dir / (name + ".jsonl");
  reveval::dataset::save(instances, data_path);
  nlohmann::json manifest{{"name", name},
                          {"kind", scoring ? "scoring" : "pairwise"},
                          {"path", data_path.filename().string()},
                          {"has_human_references", has_human_references}};
  if (scoring) {
    nlohmann::json rubrics = nlohmann::json::array();
    for (const auto& r : instances.at(0).rubrics)
      rubrics.push_back(reveval::dataset::rubric_to_json(r));
    manifest["rubrics"] = rubrics;
  }
  const auto manifest_path = dir / (name + ".manifest.json");
  std::ofstream out(manifest_path);
  out << manifest.dump(2);
  return manifest_path;
}

// ---- instrumented fakes ----

/// Counts concurrent in-flight complete() calls.
class CountingProvider : public reveval::gateway::Provider {
 public:
  explicit CountingProvider(int hold_ms) : hold_ms_(hold_ms) {}
  std::string name() const override { return "counting"; }
  std::string complete(const reveval::gateway::CompletionRequest&) override {
    const int now = inflight_.fetch_add(1) + 1;
    int seen = max_inflight_.load();
    while (now > seen && !max_inflight_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(hold_ms_));
    inflight_.fetch_sub(1);
    return "ok " + std::to_string(calls_.fetch_add(1));
  }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    return std::vector<std::vector<double>>(texts.size(), {0.0});
  }
  int max_inflight() const { return max_inflight_.load(); }
  int calls() const { return calls_.load(); }

 private:
  int hold_ms_;
  std::atomic<int> inflight_{0};
  std::atomic<int> max_inflight_{0};
  std::atomic<int> calls_{0};
};

/// Fails the first `failures` completions with a transient error.
class FlakyProvider : public reveval::gateway::Provider {
 public:
  FlakyProvider(int failures, bool transient = true) : failures_(failures), transient_(transient) {}
  std::string name() const override { return "flaky"; }
  std::string complete(const reveval::gateway::CompletionRequest&) override {
    ++attempts_;
    if (attempts_ <= failures_)
      throw reveval::gateway::ProviderError("synthetic outage", transient_);
    return "recovered";
  }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    return std::vector<std::vector<double>>(texts.size(), {0.0});
  }
  int attempts() const { return attempts_; }

 private:
  int failures_;
  bool transient_;
  int attempts_ = 0;
};

/// Replays a fixed sequence of completions.
class ScriptedProvider : public reveval::gateway::Provider {
 public:
  explicit ScriptedProvider(std::vector<std::string> script) : script_(std::move(script)) {}
  std::string name() const override { return "scripted"; }
  std::string complete(const reveval::gateway::CompletionRequest&) override {
    if (next_ >= script_.size()) throw reveval::gateway::ProviderError("script exhausted", false);
    return script_[next_++];
  }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    return std::vector<std::vector<double>>(texts.size(), {0.0});
  }

 private:
  std::vector<std::string> script_;
  std::size_t next_ = 0;
};

}  // namespace testutil
