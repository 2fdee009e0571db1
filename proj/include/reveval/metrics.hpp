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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "reveval/digest.hpp"
#include "reveval/domain.hpp"
#include "reveval/json_canon.hpp"
#include "reveval/stemmer.hpp"

namespace reveval::metrics {

enum class TokenizerKind { UnicodeWhitespaceLower };
enum class BleuSmoothing { AddOneOnZero };

/// Every knob that changes a metric value. The fingerprint travels with
/// each score so reported numbers stay attributable to exact settings.
struct MetricConfig {
  TokenizerKind tokenizer = TokenizerKind::UnicodeWhitespaceLower;
  int bleu_max_n = 4;
  BleuSmoothing bleu_smoothing = BleuSmoothing::AddOneOnZero;
  double meteor_alpha = 0.9;
  double meteor_beta = 3.0;
  double meteor_gamma = 0.5;
  double tie_epsilon = 1e-9;

  nlohmann::json to_json() const {
    return {{"tokenizer", "unicode-whitespace-lower"},
            {"bleu_max_n", bleu_max_n},
            {"bleu_smoothing", "add-one-on-zero"},
            {"meteor_alpha", meteor_alpha},
            {"meteor_beta", meteor_beta},
            {"meteor_gamma", meteor_gamma},
            {"tie_epsilon", tie_epsilon}};
  }

  std::string fingerprint() const { return sha256_hex(canonical_dump(to_json())); }
};

struct MetricScore {
  std::string metric;
  double value = 0.0;  // always in [0, 1]
  std::string config_fingerprint;
};

namespace detail {

inline bool is_unicode_space(std::uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d: case 0x20:
    case 0x85: case 0xa0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202f: case 0x205f: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

// Decodes one UTF-8 code point; malformed bytes are passed through as
// single code units so tokenization never throws.
inline std::uint32_t next_codepoint(std::string_view s, std::size_t& i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  std::size_t extra = 0;
  std::uint32_t cp = c;
  if (c >= 0xf0) { extra = 3; cp = c & 0x07u; }
  else if (c >= 0xe0) { extra = 2; cp = c & 0x0fu; }
  else if (c >= 0xc0) { extra = 1; cp = c & 0x1fu; }
  if (extra > 0 && i + extra >= s.size()) {
    // truncated sequence: emit the lead byte as-is
    ++i;
    return c;
  }
  std::size_t start = i;
  ++i;
  for (std::size_t k = 0; k < extra; ++k) {
    unsigned char cc = static_cast<unsigned char>(s[i]);
    if ((cc & 0xc0u) != 0x80u) {  // malformed: restart at this byte
      i = start + 1;
      return c;
    }
    cp = (cp << 6) | (cc & 0x3fu);
    ++i;
  }
  return extra == 0 ? c : cp;
}

}  // namespace detail

/// Splits on Unicode whitespace and lowercases ASCII letters. No subword
/// handling; declared in the config fingerprint.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    std::uint32_t cp = detail::next_codepoint(text, i);
    if (detail::is_unicode_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      for (std::size_t k = start; k < i; ++k) {
        char ch = text[k];
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
        current.push_back(ch);
      }
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace detail {

// n-grams encoded as tokens joined with a separator byte that the
// tokenizer can never emit (it is ASCII whitespace-adjacent control 0x1f).
inline std::map<std::string, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k > 0) key.push_back('\x1f');
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

// nth root via repeated sqrt when n is a power of two (sqrt is correctly
// rounded per IEEE-754, which keeps results bit-stable across libms).
inline double nth_root(double x, int n) {
  if (n == 1) return x;
  if (n == 2) return std::sqrt(x);
  if (n == 4) return std::sqrt(std::sqrt(x));
  if (n == 8) return std::sqrt(std::sqrt(std::sqrt(x)));
  return std::pow(x, 1.0 / n);
}

inline double int_power(double x, double exponent) {
  double r = std::floor(exponent);
  if (r == exponent && exponent >= 0 && exponent <= 16) {
    double acc = 1.0;
    for (int k = 0; k < static_cast<int>(exponent); ++k) acc *= x;
    return acc;
  }
  return std::pow(x, exponent);
}

}  // namespace detail

/// Sentence-level BLEU with clipped modified n-gram precision, brevity
/// penalty, and a geometric mean over orders 1..bleu_max_n. Orders whose
/// clipped match count is zero are smoothed to 1/(possible+1).
inline MetricScore bleu(std::string_view hypothesis, std::string_view reference,
                        const MetricConfig& cfg = {}) {
  MetricScore out{"bleu", 0.0, cfg.fingerprint()};
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return out;

  double product = 1.0;
  for (int n = 1; n <= cfg.bleu_max_n; ++n) {
    const auto hyp_counts = detail::ngram_counts(hyp, n);
    const auto ref_counts = detail::ngram_counts(ref, n);
    long matches = 0;
    long possible = 0;
    for (const auto& [gram, count] : hyp_counts) {
      possible += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
    double p;
    if (matches > 0) {
      p = static_cast<double>(matches) / static_cast<double>(possible);
    } else {
      p = 1.0 / static_cast<double>(possible + 1);
    }
    product *= p;
  }
  double geo_mean = detail::nth_root(product, cfg.bleu_max_n);

  double c = static_cast<double>(hyp.size());
  double r = static_cast<double>(ref.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  out.value = std::clamp(bp * geo_mean, 0.0, 1.0);
  return out;
}

namespace detail {

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// ROUGE-L: F1 over the longest common subsequence of the token streams.
inline MetricScore rouge_l(std::string_view hypothesis, std::string_view reference,
                           const MetricConfig& cfg = {}) {
  MetricScore out{"rouge_l", 0.0, cfg.fingerprint()};
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return out;
  double lcs = static_cast<double>(detail::lcs_length(hyp, ref));
  double p = lcs / static_cast<double>(hyp.size());
  double r = lcs / static_cast<double>(ref.size());
  out.value = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return out;
}

namespace detail {

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Two-stage unigram alignment: exact surface match first, then Porter-stem
// match over the leftovers. Each stage walks the hypothesis left to right
// and takes the earliest unused reference position.
inline Alignment meteor_align(const std::vector<std::string>& hyp,
                              const std::vector<std::string>& ref) {
  const std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> hyp_to_ref(hyp.size(), none);
  std::vector<bool> ref_used(ref.size(), false);

  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && hyp[i] == ref[j]) {
        hyp_to_ref[i] = j;
        ref_used[j] = true;
        break;
      }
    }
  }

  std::vector<std::string> hyp_stems(hyp.size()), ref_stems(ref.size());
  for (std::size_t i = 0; i < hyp.size(); ++i) hyp_stems[i] = stem::porter_stem(hyp[i]);
  for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = stem::porter_stem(ref[j]);
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_to_ref[i] != none) continue;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!ref_used[j] && hyp_stems[i] == ref_stems[j]) {
        hyp_to_ref[i] = j;
        ref_used[j] = true;
        break;
      }
    }
  }

  Alignment a;
  std::size_t prev_i = none, prev_j = none;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (hyp_to_ref[i] == none) continue;
    ++a.matches;
    bool contiguous = prev_i != none && i == prev_i + 1 && hyp_to_ref[i] == prev_j + 1;
    if (!contiguous) ++a.chunks;
    prev_i = i;
    prev_j = hyp_to_ref[i];
  }
  return a;
}

}  // namespace detail

/// METEOR over the two-stage alignment: harmonic Fmean weighted toward
/// recall, discounted by a fragmentation penalty gamma*(chunks/matches)^beta.
inline MetricScore meteor(std::string_view hypothesis, std::string_view reference,
                          const MetricConfig& cfg = {}) {
  MetricScore out{"meteor", 0.0, cfg.fingerprint()};
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return out;

  const auto align = detail::meteor_align(hyp, ref);
  if (align.matches == 0) return out;

  double m = static_cast<double>(align.matches);
  double p = m / static_cast<double>(hyp.size());
  double r = m / static_cast<double>(ref.size());
  double fmean = p * r / (cfg.meteor_alpha * p + (1.0 - cfg.meteor_alpha) * r);
  double frag = static_cast<double>(align.chunks) / m;
  double penalty = cfg.meteor_gamma * detail::int_power(frag, cfg.meteor_beta);
  out.value = std::clamp(fmean * (1.0 - penalty), 0.0, 1.0);
  return out;
}

/// Batch embedding callable: one vector per input text, all of equal
/// dimension. The gateway provides one; tests may pass any deterministic
/// stand-in.
using Embedder = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

namespace detail {

inline double rescaled_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp((c + 1.0) / 2.0, 0.0, 1.0);
}

}  // namespace detail

/// Embedding-based token F1: greedy max-cosine matching in both
/// directions, cosines rescaled from [-1,1] to [0,1]. Tokens are embedded
/// once per distinct surface form, so identical texts score exactly 1.
inline MetricScore embed_f1(std::string_view hypothesis, std::string_view reference,
                            const Embedder& embedder, const MetricConfig& cfg = {}) {
  MetricScore out{"embed_f1", 0.0, cfg.fingerprint()};
  const auto hyp = tokenize(hypothesis);
  const auto ref = tokenize(reference);
  if (hyp.empty() || ref.empty()) return out;

  std::map<std::string, std::size_t> vocab;
  std::vector<std::string> unique;
  for (const auto* side : {&hyp, &ref}) {
    for (const auto& tok : *side) {
      if (vocab.emplace(tok, unique.size()).second) unique.push_back(tok);
    }
  }
  const auto vectors = embedder(unique);
  if (vectors.size() != unique.size())
    throw std::runtime_error("embedder returned wrong number of vectors");

  // Identical surface forms share one embedding slot and score exactly 1,
  // so score(y, y) == 1 holds for any provider.
  auto sim = [&](const std::string& a, const std::string& b) {
    if (a == b) return 1.0;
    return detail::rescaled_cosine(vectors[vocab.at(a)], vectors[vocab.at(b)]);
  };

  double p_sum = 0.0;
  for (const auto& ht : hyp) {
    double best = 0.0;
    for (const auto& rt : ref) best = std::max(best, sim(ht, rt));
    p_sum += best;
  }
  double r_sum = 0.0;
  for (const auto& rt : ref) {
    double best = 0.0;
    for (const auto& ht : hyp) best = std::max(best, sim(rt, ht));
    r_sum += best;
  }
  double p = p_sum / static_cast<double>(hyp.size());
  double r = r_sum / static_cast<double>(ref.size());
  out.value = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  return out;
}

/// Indicator extension of a score metric to pairwise comparison: prefer
/// the higher-scoring side, with an explicit epsilon tie band.
inline Preference prefer_by_scores(double s1, double s2, double tie_epsilon) {
  if (s1 > s2 + tie_epsilon) return Preference::First;
  if (s2 > s1 + tie_epsilon) return Preference::Second;
  return Preference::Tie;
}

template <typename MetricFn>
Preference pairwise_prefer(MetricFn&& metric, std::string_view y1, std::string_view y2,
                           std::string_view reference_text, double tie_epsilon = 1e-9) {
  const double s1 = metric(y1, reference_text);
  const double s2 = metric(y2, reference_text);
  return prefer_by_scores(s1, s2, tie_epsilon);
}

/// Plurality over First/Second votes. Tie votes abstain; an equal count
/// (including all-abstain) yields Tie.
inline Preference majority_vote(const std::vector<Preference>& verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("majority_vote: empty verdict list");
  long first = 0, second = 0;
  for (Preference p : verdicts) {
    if (p == Preference::First) ++first;
    if (p == Preference::Second) ++second;
  }
  if (first > second) return Preference::First;
  if (second > first) return Preference::Second;
  return Preference::Tie;
}

inline const std::vector<std::string>& known_metric_names() {
  static const std::vector<std::string> names{"bleu", "rouge_l", "meteor", "embed_f1"};
  return names;
}

}  // namespace reveval::metrics
