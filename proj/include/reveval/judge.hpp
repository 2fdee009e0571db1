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

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reveval/domain.hpp"
#include "reveval/gateway.hpp"
#include "reveval/metrics.hpp"
#include "reveval/prompt.hpp"

namespace reveval::judge {

/// RefFree judges from the prompt alone; RefBased consumes a human or
/// direct-response reference; AdaptedRef consumes a response-adapted one.
enum class JudgeMode { RefFree, RefBased, AdaptedRef };

inline std::string_view to_string(JudgeMode m) {
  switch (m) {
    case JudgeMode::RefFree: return "ref-free";
    case JudgeMode::RefBased: return "ref-based";
    case JudgeMode::AdaptedRef: return "adapted";
  }
  return "ref-free";
}

inline std::optional<JudgeMode> parse_judge_mode(std::string_view s) {
  if (s == "ref-free") return JudgeMode::RefFree;
  if (s == "ref-based") return JudgeMode::RefBased;
  if (s == "adapted") return JudgeMode::AdaptedRef;
  return std::nullopt;
}

struct ModeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Type-level discipline: each mode accepts only references of the
/// provenance it stands for.
inline void check_mode_reference(JudgeMode mode, const std::optional<Reference>& ref) {
  switch (mode) {
    case JudgeMode::RefFree:
      if (ref) throw ModeError("ref-free judging must not receive a reference");
      return;
    case JudgeMode::RefBased:
      if (!ref) throw ModeError("ref-based judging requires a reference");
      if (ref->provenance == Provenance::ResponseAdapted)
        throw ModeError("ref-based judging takes human or direct-response references only");
      return;
    case JudgeMode::AdaptedRef:
      if (!ref) throw ModeError("adapted-reference judging requires a reference");
      if (ref->provenance != Provenance::ResponseAdapted)
        throw ModeError("adapted-reference judging requires a response-adapted reference");
      return;
  }
}

struct JudgeOptions {
  std::string model = "mock-model";
  double temperature = 0.0;
  int max_tokens = 1024;
};

/// Outcome of one scoring call. A double parse failure is an abstention:
/// the verdict is absent and the record is excluded from correlations.
struct ScoreOutcome {
  std::optional<Verdict> verdict;
  bool abstained = false;
  std::vector<gateway::Transcript> transcripts;
};

/// Outcome of one pairwise call. An abstention is recorded as Tie.
struct PairOutcome {
  Verdict verdict;
  bool abstained = false;
  std::vector<gateway::Transcript> transcripts;
};

/// Forward and position-swapped verdicts on the same pair. `consistent`
/// means both orientations named the same underlying winner after
/// un-swapping; an abstention in either leg excludes the pair from the
/// flip-rate denominator.
struct PairVerdictPair {
  PairOutcome forward;
  PairOutcome swapped;
  bool consistent = false;
  bool excluded = false;
};

inline Preference unswap(Preference p) {
  if (p == Preference::First) return Preference::Second;
  if (p == Preference::Second) return Preference::First;
  return Preference::Tie;
}

class Judge {
 public:
  Judge(gateway::Gateway& gw, const prompt::TemplateRegistry& templates, JudgeOptions opts = {})
      : gw_(gw), templates_(templates), opts_(std::move(opts)) {}

  ScoreOutcome judge_score(const std::string& instruction, const Rubric& rubric,
                           const std::string& response, JudgeMode mode,
                           const std::optional<Reference>& ref = std::nullopt) {
    check_mode_reference(mode, ref);
    const auto id = mode == JudgeMode::RefFree ? prompt::TemplateId::RefFreeScore
                                               : prompt::TemplateId::RefBasedScore;
    prompt::SlotMap slots{{"instruction", instruction},
                          {"rubric", prompt::format_rubric(rubric, true)},
                          {"response", response}};
    if (ref) slots["reference"] = ref->text;

    ScoreOutcome out;
    auto req = make_request(templates_.get(id), slots, opts_.temperature);
    gateway::Transcript t = gw_.complete(req);
    out.transcripts.push_back(t);
    auto parsed = prompt::parse_score_verdict(t.completion, rubric.scale_lo, rubric.scale_hi);
    if (!parsed.ok()) {
      auto retry_req = with_format_reminder(req, t.completion, score_reminder(rubric));
      gateway::Transcript t2 = gw_.complete(retry_req);
      out.transcripts.push_back(t2);
      parsed = prompt::parse_score_verdict(t2.completion, rubric.scale_lo, rubric.scale_hi);
      t = std::move(t2);
    }
    if (parsed.ok()) {
      out.verdict = Verdict::make_score(*parsed.score, t.completion, parsed.span_begin,
                                        parsed.span_end);
    } else {
      out.abstained = true;
    }
    return out;
  }

  /// `response_one` occupies position A, `response_two` position B.
  PairOutcome judge_pair(const std::string& instruction, const Rubric& rubric,
                         const std::string& response_one, const std::string& response_two,
                         JudgeMode mode, const std::optional<Reference>& ref = std::nullopt,
                         std::optional<double> temperature_override = std::nullopt) {
    check_mode_reference(mode, ref);
    const auto id = mode == JudgeMode::RefFree ? prompt::TemplateId::RefFreePairwise
                                               : prompt::TemplateId::RefBasedPairwise;
    prompt::SlotMap slots{{"instruction", instruction},
                          {"rubric", prompt::format_rubric(rubric, false)},
                          {"response_a", response_one},
                          {"response_b", response_two}};
    if (ref) slots["reference"] = ref->text;

    PairOutcome out;
    auto req = make_request(templates_.get(id), slots,
                            temperature_override.value_or(opts_.temperature));
    gateway::Transcript t = gw_.complete(req);
    out.transcripts.push_back(t);
    auto parsed = prompt::parse_pairwise_verdict(t.completion);
    if (!parsed.ok()) {
      auto retry_req = with_format_reminder(req, t.completion, pairwise_reminder());
      gateway::Transcript t2 = gw_.complete(retry_req);
      out.transcripts.push_back(t2);
      parsed = prompt::parse_pairwise_verdict(t2.completion);
      t = std::move(t2);
    }
    if (parsed.ok()) {
      out.verdict = Verdict::make_preference(*parsed.preference, t.completion, parsed.span_begin,
                                             parsed.span_end);
    } else {
      out.abstained = true;
      out.verdict = Verdict::make_preference(Preference::Tie, t.completion, 0, 0);
    }
    return out;
  }

  /// Runs the pair twice, positions exchanged on the second run, and
  /// checks that both orientations name the same winner.
  PairVerdictPair judge_pair_swapped(const std::string& instruction, const Rubric& rubric,
                                     const std::string& response_one,
                                     const std::string& response_two, JudgeMode mode,
                                     const std::optional<Reference>& ref = std::nullopt) {
    PairVerdictPair pair;
    pair.forward = judge_pair(instruction, rubric, response_one, response_two, mode, ref);
    pair.swapped = judge_pair(instruction, rubric, response_two, response_one, mode, ref);
    pair.excluded = pair.forward.abstained || pair.swapped.abstained;
    pair.consistent = !pair.excluded &&
                      pair.forward.verdict.preference == unswap(pair.swapped.verdict.preference);
    return pair;
  }

  /// One judging cycle per temperature, then plurality voting. Abstaining
  /// cycles vote Tie, which the vote treats as abstention.
  PairOutcome multi_cycle_judge(const std::string& instruction, const Rubric& rubric,
                                const std::string& response_one, const std::string& response_two,
                                JudgeMode mode, const std::optional<Reference>& ref,
                                const std::vector<double>& temperatures) {
    if (temperatures.empty())
      throw std::invalid_argument("multi_cycle_judge: temperature list is empty");
    std::vector<Preference> votes;
    PairOutcome out;
    for (double temp : temperatures) {
      PairOutcome cycle = judge_pair(instruction, rubric, response_one, response_two, mode, ref, temp);
      votes.push_back(cycle.abstained ? Preference::Tie : cycle.verdict.preference);
      for (auto& t : cycle.transcripts) out.transcripts.push_back(std::move(t));
    }
    out.verdict = Verdict::make_preference(metrics::majority_vote(votes), "", 0, 0);
    out.abstained = false;
    return out;
  }

 private:
  gateway::CompletionRequest make_request(const prompt::Template& tpl,
                                          const prompt::SlotMap& slots, double temperature) const {
    gateway::CompletionRequest req;
    req.model = opts_.model;
    req.messages = prompt::render(tpl, slots);
    req.temperature = temperature;
    req.max_tokens = opts_.max_tokens;
    req.template_id = std::string(prompt::to_string(tpl.id));
    req.template_version = tpl.version;
    return req;
  }

  static gateway::CompletionRequest with_format_reminder(gateway::CompletionRequest req,
                                                         const std::string& bad_completion,
                                                         const std::string& reminder) {
    req.messages.push_back({"assistant", bad_completion});
    req.messages.push_back({"user", reminder});
    return req;
  }

  static std::string pairwise_reminder() {
    return "Your previous reply did not end with a verdict in the required format. "
           "Reply again and end with the final verdict letter (A, B, or C) wrapped in "
           "double square brackets.";
  }

  static std::string score_reminder(const Rubric& rubric) {
    return "Your previous reply did not end with a rating in the required format. "
           "Reply again and end with a single integer between " +
           std::to_string(rubric.scale_lo) + " and " + std::to_string(rubric.scale_hi) +
           " wrapped in double square brackets.";
  }

  gateway::Gateway& gw_;
  const prompt::TemplateRegistry& templates_;
  JudgeOptions opts_;
};

}  // namespace reveval::judge
