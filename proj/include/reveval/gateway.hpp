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
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "reveval/digest.hpp"
#include "reveval/json_canon.hpp"
#include "reveval/prompt.hpp"

namespace reveval::gateway {

struct CompletionRequest {
  std::string model;
  std::vector<prompt::Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string template_id;
  std::string template_version;

  bool operator==(const CompletionRequest&) const = default;

  void validate() const {
    if (messages.empty())
      throw std::invalid_argument("completion request has no messages");
    if (messages.front().role != "system" && messages.front().role != "user")
      throw std::invalid_argument("first message role must be system or user");
    if (temperature < 0.0)
      throw std::invalid_argument("temperature must be >= 0");
    if (max_tokens <= 0)
      throw std::invalid_argument("max_tokens must be positive");
  }
};

inline nlohmann::json request_to_json(const CompletionRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model},
          {"messages", msgs},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens},
          {"template_id", req.template_id},
          {"template_version", req.template_version}};
}

inline CompletionRequest request_from_json(const nlohmann::json& j) {
  CompletionRequest req;
  req.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages"))
    req.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  req.temperature = j.at("temperature").get<double>();
  req.max_tokens = j.at("max_tokens").get<int>();
  req.template_id = j.at("template_id").get<std::string>();
  req.template_version = j.at("template_version").get<std::string>();
  return req;
}

/// Content address of a request. Message content is hashed literally —
/// no whitespace canonicalization — because whitespace can change model
/// output. Field-order independence comes from the canonical encoder.
inline std::string cache_key(std::string_view provider_name, const CompletionRequest& req) {
  nlohmann::json j = request_to_json(req);
  j["provider"] = std::string(provider_name);
  return sha256_hex(canonical_dump(j));
}

struct Transcript {
  std::string id;  // cache_key of the request
  CompletionRequest request;
  std::string completion;
  long latency_ms = 0;
  bool cache_hit = false;
  std::string provider;

  bool operator==(const Transcript&) const = default;
};

inline nlohmann::json transcript_to_json(const Transcript& t) {
  return {{"id", t.id},
          {"request", request_to_json(t.request)},
          {"completion", t.completion},
          {"latency_ms", t.latency_ms},
          {"cache_hit", t.cache_hit},
          {"provider", t.provider}};
}

inline Transcript transcript_from_json(const nlohmann::json& j) {
  Transcript t;
  t.id = j.at("id").get<std::string>();
  t.request = request_from_json(j.at("request"));
  t.completion = j.at("completion").get<std::string>();
  t.latency_ms = j.at("latency_ms").get<long>();
  t.cache_hit = j.at("cache_hit").get<bool>();
  t.provider = j.at("provider").get<std::string>();
  return t;
}

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProviderError : GatewayError {
  bool transient;
  explicit ProviderError(const std::string& msg, bool is_transient = true)
      : GatewayError(msg), transient(is_transient) {}
};
struct TimeoutError : ProviderError {
  explicit TimeoutError(const std::string& msg) : ProviderError(msg, true) {}
};
struct AuthError : GatewayError {
  using GatewayError::GatewayError;
};
struct DimensionMismatch : GatewayError {
  using GatewayError::GatewayError;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const CompletionRequest& req) = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::string trim_copy(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

// Pulls the text between "[The Start of <label>]" and "[The End of
// <label>]" as laid out by the v1 templates.
inline std::optional<std::string> extract_section(std::string_view text, std::string_view label) {
  const std::string begin_marker = "[The Start of " + std::string(label) + "]";
  const std::string end_marker = "[The End of " + std::string(label) + "]";
  const auto b = text.find(begin_marker);
  if (b == std::string_view::npos) return std::nullopt;
  const auto content_begin = b + begin_marker.size();
  const auto e = text.find(end_marker, content_begin);
  if (e == std::string_view::npos) return std::nullopt;
  return trim_copy(text.substr(content_begin, e - content_begin));
}

inline std::optional<std::pair<int, int>> extract_scale(std::string_view text) {
  constexpr std::string_view phrase = "integer scale from ";
  const auto p = text.find(phrase);
  if (p == std::string_view::npos) return std::nullopt;
  std::size_t i = p + phrase.size();
  auto read_int = [&]() -> std::optional<int> {
    bool neg = false;
    if (i < text.size() && text[i] == '-') { neg = true; ++i; }
    std::size_t start = i;
    long v = 0;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
      v = v * 10 + (text[i] - '0');
      ++i;
    }
    if (i == start) return std::nullopt;
    return static_cast<int>(neg ? -v : v);
  };
  auto lo = read_int();
  if (!lo) return std::nullopt;
  constexpr std::string_view sep = " to ";
  if (text.substr(i, sep.size()) != sep) return std::nullopt;
  i += sep.size();
  auto hi = read_int();
  if (!hi || *hi <= *lo) return std::nullopt;
  return std::make_pair(*lo, *hi);
}

}  // namespace detail

/// Offline backend: a pure function of (request, seed). Completions are
/// derived from SHA-256 of the rendered prompt, so the full pipeline on
/// this backend is reproducible across machines. Section extraction
/// follows the v1 template layout.
class MockProvider : public Provider {
 public:
  enum class JudgeStyle {
    ContentHash,             // pseudo-random but content-determined verdicts
    AlwaysFirst,             // position-only judge: always picks position A
    PreferByContentDigest,   // position-blind judge: winner chosen by content
  };

  struct Options {
    std::uint64_t seed = 0;
    JudgeStyle judge_style = JudgeStyle::ContentHash;
    int embedding_dim = 16;
  };

  MockProvider() = default;
  explicit MockProvider(Options opts) : opts_(opts) {}

  std::string name() const override { return "mock"; }

  std::string complete(const CompletionRequest& req) override {
    std::string user_text;
    for (const auto& m : req.messages)
      if (m.role == "user") user_text += m.content + "\n";
    std::string full_text;
    for (const auto& m : req.messages) full_text += m.role + ":" + m.content + "\n";

    const std::string& tid = req.template_id;
    if (tid == "revise_score")
      return detail::extract_section(user_text, "Response to Revise").value_or(user_text);
    if (tid == "revise_pairwise")
      return detail::extract_section(user_text, "Primary Response to Revise").value_or(user_text);
    if (tid == "direct_response")
      return detail::trim_copy(user_text);
    if (tid == "ref_free_score" || tid == "ref_based_score")
      return score_completion(full_text, user_text);
    if (tid == "ref_free_pairwise" || tid == "ref_based_pairwise")
      return pairwise_completion(full_text, user_text);
    // Unknown template: still deterministic.
    return "mock completion " + sha256_hex(seeded(full_text)).substr(0, 12);
  }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      std::uint64_t state = sha256_u64(seeded(t));
      std::vector<double> v(static_cast<std::size_t>(opts_.embedding_dim));
      for (auto& component : v) {
        const std::uint64_t u = detail::splitmix64(state) >> 11;  // 53 random bits
        component = static_cast<double>(u) / 4503599627370496.0 - 1.0;  // [-1, 1)
      }
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  std::string seeded(std::string_view content) const {
    return std::to_string(opts_.seed) + "\x1f" + std::string(content);
  }

  std::string score_completion(const std::string& full_text, const std::string& user_text) const {
    auto scale = detail::extract_scale(user_text).value_or(std::make_pair(1, 5));
    const std::uint64_t h = sha256_u64(seeded(full_text));
    const int span = scale.second - scale.first + 1;
    const int rating = scale.first + static_cast<int>(h % static_cast<std::uint64_t>(span));
    return "The response was weighed against the stated criterion.\n- Rating: [[" +
           std::to_string(rating) + "]]";
  }

  std::string pairwise_completion(const std::string& full_text, const std::string& user_text) const {
    char verdict = 'A';
    switch (opts_.judge_style) {
      case JudgeStyle::AlwaysFirst:
        verdict = 'A';
        break;
      case JudgeStyle::ContentHash:
        verdict = (sha256_u64(seeded(full_text)) & 1) == 0 ? 'A' : 'B';
        break;
      case JudgeStyle::PreferByContentDigest: {
        const auto a = detail::extract_section(user_text, "Assistant A's Response");
        const auto b = detail::extract_section(user_text, "Assistant B's Response");
        if (!a || !b) {
          verdict = 'A';
        } else if (*a == *b) {
          verdict = 'C';
        } else {
          verdict = sha256_hex(seeded(*a)) < sha256_hex(seeded(*b)) ? 'A' : 'B';
        }
        break;
      }
    }
    return std::string("Both responses were compared on the stated criterion.\n- Final Verdict: [[") +
           verdict + "]]";
  }

  Options opts_;
};

// The HTTP provider lives in gateway_http.hpp so that only network-facing
// binaries pay the httplib compile cost.

/// Append-only persistent store of (digest, transcript) records. Records
/// are length-prefixed canonical JSON: "<byte length>\n<json>\n". First
/// write per digest wins; a partial trailing record left by a crash is
/// truncated away on open. Reads are concurrent; appends are serialized.
class TranscriptCache {
 public:
  TranscriptCache() = default;  // in-memory only

  explicit TranscriptCache(std::filesystem::path path) : path_(std::move(path)) {
    load();
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw std::runtime_error("cannot open cache file for append: " + path_.string());
  }

  std::optional<Transcript> get(const std::string& digest) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(digest);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool put(const Transcript& t) {
    std::unique_lock lock(mu_);
    if (index_.count(t.id)) return false;
    index_.emplace(t.id, t);
    ++record_count_;
    if (out_.is_open()) {
      const std::string payload = canonical_dump(transcript_to_json(t));
      out_ << payload.size() << '\n' << payload << '\n';
      out_.flush();
    }
    return true;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return index_.size();
  }

  std::size_t record_count() const {
    std::shared_lock lock(mu_);
    return record_count_;
  }

  const std::filesystem::path& path() const { return path_; }

  /// Rewrites the file keeping one record per digest.
  static std::size_t gc(const std::filesystem::path& path) {
    TranscriptCache cache(path);
    const auto tmp = path.string() + ".gc";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open " + tmp);
      std::shared_lock lock(cache.mu_);
      for (const auto& [digest, t] : cache.index_) {
        (void)digest;
        const std::string payload = canonical_dump(transcript_to_json(t));
        out << payload.size() << '\n' << payload << '\n';
      }
    }
    std::filesystem::rename(tmp, path);
    return cache.size();
  }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // fresh cache
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0, good_end = 0;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      if (nl == std::string::npos) break;
      std::size_t len = 0;
      bool ok = nl > pos;
      for (std::size_t i = pos; i < nl && ok; ++i) {
        if (data[i] < '0' || data[i] > '9') ok = false;
        else len = len * 10 + static_cast<std::size_t>(data[i] - '0');
      }
      if (!ok || nl + 1 + len + 1 > data.size() || data[nl + 1 + len] != '\n') break;
      try {
        const auto j = nlohmann::json::parse(data.substr(nl + 1, len));
        Transcript t = transcript_from_json(j);
        index_.emplace(t.id, std::move(t));  // keep-first
        ++record_count_;
      } catch (const std::exception&) {
        break;
      }
      pos = nl + 1 + len + 1;
      good_end = pos;
    }
    if (good_end < data.size()) std::filesystem::resize_file(path_, good_end);
  }

  mutable std::shared_mutex mu_;
  std::map<std::string, Transcript> index_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t record_count_ = 0;
};

struct GatewayConfig {
  int concurrency = 4;
  int retries = 3;
  int backoff_base_ms = 250;
};

/// The only concurrent component: callers hand over batches, a bounded
/// worker pool drains them, and every completed call is recorded in the
/// content-addressed cache. At most `concurrency` provider calls are in
/// flight at any moment.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, GatewayConfig cfg = {},
          std::shared_ptr<TranscriptCache> cache = nullptr)
      : provider_(std::move(provider)), cfg_(cfg), cache_(std::move(cache)) {
    if (!provider_) throw std::invalid_argument("gateway requires a provider");
    if (cfg_.concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
  }

  Transcript complete(const CompletionRequest& req) {
    req.validate();
    const std::string digest = cache_key(provider_->name(), req);
    if (cache_) {
      if (auto hit = cache_->get(digest)) {
        hit->cache_hit = true;
        return *hit;
      }
    }
    const auto started = std::chrono::steady_clock::now();
    const std::string completion = with_retries([&] { return provider_->complete(req); });
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    Transcript t;
    t.id = digest;
    t.request = req;
    t.completion = completion;
    t.latency_ms = static_cast<long>(elapsed.count());
    t.cache_hit = false;
    t.provider = provider_->name();
    if (cache_) {
      if (!cache_->put(t)) {
        // another worker stored this digest first; replay the stored bytes
        if (auto stored = cache_->get(digest)) {
          stored->cache_hit = true;
          return *stored;
        }
      }
    }
    return t;
  }

  struct BatchItem {
    std::optional<Transcript> transcript;
    std::string error;
    bool ok() const { return transcript.has_value(); }
  };

  std::vector<BatchItem> complete_batch(const std::vector<CompletionRequest>& requests) {
    std::vector<BatchItem> results(requests.size());
    parallel_for(requests.size(), [&](std::size_t i) {
      try {
        results[i].transcript = complete(requests[i]);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    });
    return results;
  }

  /// One vector per input, all of equal dimension.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed: empty text list");
    for (const auto& t : texts)
      if (detail::trim_copy(t).empty())
        throw std::invalid_argument("embed: text empty after normalization");
    auto vectors = with_retries([&] { return provider_->embed(texts); });
    if (vectors.size() != texts.size())
      throw DimensionMismatch("provider returned wrong number of embedding vectors");
    for (const auto& v : vectors)
      if (v.size() != vectors.front().size())
        throw DimensionMismatch("provider returned ragged embedding vectors");
    return vectors;
  }

  /// Runs fn(0..n-1) on a bounded pool. The first exception to escape fn
  /// is rethrown after all workers join.
  template <typename F>
  void parallel_for(std::size_t n, F&& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(cfg_.concurrency), n);
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  Provider& provider() { return *provider_; }
  TranscriptCache* cache() { return cache_.get(); }
  const GatewayConfig& config() const { return cfg_; }

 private:
  template <typename Op>
  auto with_retries(Op&& op) -> decltype(op()) {
    for (int attempt = 0;; ++attempt) {
      try {
        return op();
      } catch (const AuthError&) {
        throw;
      } catch (const ProviderError& e) {
        if (!e.transient || attempt >= cfg_.retries) throw;
        if (cfg_.backoff_base_ms > 0)
          std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_base_ms << attempt));
      }
    }
  }

  std::shared_ptr<Provider> provider_;
  GatewayConfig cfg_;
  std::shared_ptr<TranscriptCache> cache_;
};

}  // namespace reveval::gateway
