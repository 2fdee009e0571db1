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

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "reveval/gateway.hpp"

namespace reveval::gateway {

/// HTTP chat-completion backend speaking the de facto "messages" JSON
/// protocol: POST <endpoint>/chat/completions and <endpoint>/embeddings.
/// The credential is read from an environment variable and redacted from
/// verbose logs.
class HttpProvider : public Provider {
 public:
  struct Options {
    std::string endpoint;  // e.g. "http://host:8080/v1"
    std::string credential_env = "OPENAI_API_KEY";
    std::string embed_model = "text-embedding-3-small";
    int timeout_ms = 60000;
    bool verbose = false;
  };

  explicit HttpProvider(Options opts) : opts_(std::move(opts)) {
    split_endpoint(opts_.endpoint, base_, prefix_);
    if (!opts_.credential_env.empty()) {
      if (const char* cred = std::getenv(opts_.credential_env.c_str())) credential_ = cred;
    }
  }

  std::string name() const override { return "http:" + base_ + prefix_; }

  std::string complete(const CompletionRequest& req) override {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages)
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    const nlohmann::json body{{"model", req.model},
                              {"messages", msgs},
                              {"temperature", req.temperature},
                              {"max_tokens", req.max_tokens}};
    const auto reply = post_json("/chat/completions", body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      throw ProviderError(std::string("malformed chat completion reply: ") + e.what(), false);
    }
  }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    const nlohmann::json body{{"model", opts_.embed_model}, {"input", texts}};
    const auto reply = post_json("/embeddings", body);
    std::vector<std::vector<double>> out;
    try {
      for (const auto& row : reply.at("data"))
        out.push_back(row.at("embedding").get<std::vector<double>>());
    } catch (const std::exception& e) {
      throw ProviderError(std::string("malformed embeddings reply: ") + e.what(), false);
    }
    return out;
  }

 private:
  static void split_endpoint(const std::string& endpoint, std::string& base, std::string& prefix) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw std::invalid_argument("endpoint must include a scheme: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base = endpoint;
      prefix.clear();
    } else {
      base = endpoint.substr(0, path_start);
      prefix = endpoint.substr(path_start);
      while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    }
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    httplib::Client client(base_);
    client.set_connection_timeout(opts_.timeout_ms / 1000, (opts_.timeout_ms % 1000) * 1000);
    client.set_read_timeout(opts_.timeout_ms / 1000, (opts_.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);

    const std::string payload = body.dump();
    if (opts_.verbose)
      std::fprintf(stderr, "[gateway] POST %s%s authorization=%s body=%s\n", base_.c_str(),
                   (prefix_ + path).c_str(), credential_.empty() ? "(none)" : "Bearer ***",
                   payload.c_str());

    auto res = client.Post(prefix_ + path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write)
        throw TimeoutError("request timed out: " + httplib::to_string(err));
      throw ProviderError("transport failure: " + httplib::to_string(err), true);
    }
    if (opts_.verbose)
      std::fprintf(stderr, "[gateway] status=%d body=%s\n", res->status, res->body.c_str());
    if (res->status == 401 || res->status == 403)
      throw AuthError("authentication rejected (status " + std::to_string(res->status) + ")");
    if (res->status == 408 || res->status == 429 || res->status >= 500)
      throw ProviderError("retryable provider status " + std::to_string(res->status), true);
    if (res->status != 200)
      throw ProviderError("provider status " + std::to_string(res->status) + ": " + res->body, false);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      throw ProviderError(std::string("provider returned invalid JSON: ") + e.what(), false);
    }
  }

  Options opts_;
  std::string base_;
  std::string prefix_;
  std::string credential_;
};

}  // namespace reveval::gateway
