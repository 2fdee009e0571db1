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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "reveval/digest.hpp"
#include "reveval/domain.hpp"
#include "reveval/gateway.hpp"
#include "reveval/prompt.hpp"

namespace reveval::reviser {

struct EmptyRevision : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic pairwise draw: hash (seed, instance id) and take the low
/// bit. Reproducible across runs and machines with no shared PRNG stream,
/// uniform over {First, Second} because the hash bit is.
inline RevisionChoice draw_choice(std::uint64_t seed, std::string_view instance_id) {
  std::string material = std::to_string(seed) + ":" + std::string(instance_id);
  const auto digest = sha256_bytes(material);
  RevisionChoice choice;
  choice.chosen = (digest[0] & 1) == 0 ? PrimarySide::First : PrimarySide::Second;
  choice.seed_material = std::move(material);
  return choice;
}

/// A produced reference plus the pairwise draw (when any) and the
/// transcript behind it.
struct RevisionOutcome {
  Reference reference;
  std::optional<RevisionChoice> choice;  // pairwise only
  gateway::Transcript transcript;
};

struct ReviserOptions {
  std::string model = "mock-model";
  double temperature = 0.0;
  int max_tokens = 1024;
};

/// Produces references: response-adapted ones by revising the response
/// under evaluation, and direct responses for the reference-based
/// baseline. Stateless given the gateway; batches parallelize upstream.
class Reviser {
 public:
  Reviser(gateway::Gateway& gw, const prompt::TemplateRegistry& templates,
          ReviserOptions opts = {})
      : gw_(gw), templates_(templates), opts_(std::move(opts)) {}

  /// Revise a single response conditioned on (instruction, rubric).
  RevisionOutcome revise_single(const std::string& instruction, const Rubric& rubric,
                                const std::string& response) {
    if (response.empty()) throw std::invalid_argument("revise_single: empty response");
    prompt::SlotMap slots{{"instruction", instruction},
                          {"rubric", prompt::format_rubric(rubric, false)},
                          {"response", response}};
    return run(prompt::TemplateId::ReviseScore, slots, std::nullopt);
  }

  /// Pairwise revision: the seeded draw picks the primary text; the other
  /// response rides along as revision guidance, flagged as possibly
  /// imperfect in the prompt.
  RevisionOutcome revise_pairwise(const std::string& instruction, const Rubric& rubric,
                                  const std::string& response_one, const std::string& response_two,
                                  std::uint64_t seed, const std::string& instance_id) {
    if (response_one.empty() || response_two.empty())
      throw std::invalid_argument("revise_pairwise: empty response");
    RevisionChoice choice = draw_choice(seed, instance_id);
    const bool first = choice.chosen == PrimarySide::First;
    const std::string& primary = first ? response_one : response_two;
    const std::string& guidance = first ? response_two : response_one;
    prompt::SlotMap slots{{"instruction", instruction},
                          {"rubric", prompt::format_rubric(rubric, false)},
                          {"response", primary},
                          {"revision_guidance", guidance}};
    return run(prompt::TemplateId::RevisePairwise, slots, choice);
  }

  /// The model's direct answer to the instruction; used only as the
  /// reference-based baseline, never in adapted-reference judging.
  RevisionOutcome direct_response(const std::string& instruction) {
    if (instruction.empty()) throw std::invalid_argument("direct_response: empty instruction");
    prompt::SlotMap slots{{"instruction", instruction}};
    const auto& tpl = templates_.get(prompt::TemplateId::DirectResponse);
    gateway::Transcript t = gw_.complete(make_request(tpl, slots));
    RevisionOutcome outcome;
    outcome.reference.text = t.completion;
    outcome.reference.provenance = Provenance::DirectResponse;
    outcome.transcript = std::move(t);
    return outcome;
  }

 private:
  gateway::CompletionRequest make_request(const prompt::Template& tpl,
                                          const prompt::SlotMap& slots) const {
    gateway::CompletionRequest req;
    req.model = opts_.model;
    req.messages = prompt::render(tpl, slots);
    req.temperature = opts_.temperature;
    req.max_tokens = opts_.max_tokens;
    req.template_id = std::string(prompt::to_string(tpl.id));
    req.template_version = tpl.version;
    return req;
  }

  RevisionOutcome run(prompt::TemplateId id, const prompt::SlotMap& slots,
                      std::optional<RevisionChoice> choice) {
    const auto& tpl = templates_.get(id);
    gateway::Transcript t = gw_.complete(make_request(tpl, slots));
    std::string text = trim(t.completion);
    if (text.empty()) throw EmptyRevision("reviser produced a blank revision");
    RevisionOutcome outcome;
    outcome.reference.text = std::move(text);
    outcome.reference.provenance = Provenance::ResponseAdapted;
    outcome.reference.source_transcript_id = t.id;
    outcome.choice = std::move(choice);
    outcome.transcript = std::move(t);
    return outcome;
  }

  static std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
  }

  gateway::Gateway& gw_;
  const prompt::TemplateRegistry& templates_;
  ReviserOptions opts_;
};

}  // namespace reveval::reviser
