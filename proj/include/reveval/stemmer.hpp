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

#include <string>
#include <string_view>

namespace reveval::stem {

// Classic Porter stemmer (1980 rule set). Words shorter than 3 letters
// and words containing anything outside [a-z] are returned unchanged.

namespace detail {

inline bool is_consonant(const std::string& w, std::size_t i) {
  char c = w[i];
  if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
  if (c == 'y') return i == 0 ? true : !is_consonant(w, i - 1);
  return true;
}

// Number of (VC) sequences in w[0..len): the word form is [C](VC)^m[V].
inline int measure(const std::string& w, std::size_t len) {
  int m = 0;
  std::size_t i = 0;
  while (true) {
    if (i >= len) return m;
    if (!is_consonant(w, i)) break;
    ++i;
  }
  ++i;
  while (true) {
    while (true) {
      if (i >= len) return m;
      if (is_consonant(w, i)) break;
      ++i;
    }
    ++i;
    ++m;
    while (true) {
      if (i >= len) return m;
      if (!is_consonant(w, i)) break;
      ++i;
    }
    ++i;
  }
}

inline bool has_vowel(const std::string& w, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

inline bool ends_double_consonant(const std::string& w) {
  std::size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// *o: stem ends consonant-vowel-consonant and the final consonant is not
// w, x, or y.
inline bool ends_cvc(const std::string& w, std::size_t len) {
  if (len < 3) return false;
  if (!is_consonant(w, len - 3) || is_consonant(w, len - 2) || !is_consonant(w, len - 1))
    return false;
  char c = w[len - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

inline bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() &&
         std::string_view(w).substr(w.size() - suffix.size()) == suffix;
}

// Replace `suffix` by `repl` when the measure of the remaining stem is
// greater than `min_m`. Returns true when the suffix matched (whether or
// not the replacement fired), which ends the containing step.
inline bool rule(std::string& w, std::string_view suffix, std::string_view repl, int min_m) {
  if (!ends_with(w, suffix)) return false;
  std::size_t stem_len = w.size() - suffix.size();
  if (measure(w, stem_len) > min_m) {
    w.resize(stem_len);
    w.append(repl);
  }
  return true;
}

}  // namespace detail

inline std::string porter_stem(std::string word) {
  using namespace detail;
  if (word.size() <= 2) return word;
  for (char c : word)
    if (c < 'a' || c > 'z') return word;

  std::string& w = word;

  // Step 1a
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (!ends_with(w, "ss") && ends_with(w, "s")) {
    w.resize(w.size() - 1);
  }

  // Step 1b
  bool ed_or_ing_removed = false;
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.resize(w.size() - 1);
  } else if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) {
    w.resize(w.size() - 2);
    ed_or_ing_removed = true;
  } else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) {
    w.resize(w.size() - 3);
    ed_or_ing_removed = true;
  }
  if (ed_or_ing_removed) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w.push_back('e');
    } else if (ends_double_consonant(w)) {
      char last = w.back();
      if (last != 'l' && last != 's' && last != 'z') w.resize(w.size() - 1);
    } else if (measure(w, w.size()) == 1 && ends_cvc(w, w.size())) {
      w.push_back('e');
    }
  }

  // Step 1c
  if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w.back() = 'i';

  // Step 2
  static constexpr std::pair<std::string_view, std::string_view> step2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
  for (const auto& [suf, rep] : step2)
    if (rule(w, suf, rep, 0)) break;

  // Step 3
  static constexpr std::pair<std::string_view, std::string_view> step3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
  for (const auto& [suf, rep] : step3)
    if (rule(w, suf, rep, 0)) break;

  // Step 4
  static constexpr std::string_view step4[] = {
      "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ion",
      "ism",   "ate",  "iti",  "ous",  "ive",  "ize",  "al",  "er",  "ic",
      "ou"};
  for (std::string_view suf : step4) {
    if (!ends_with(w, suf)) continue;
    std::size_t stem_len = w.size() - suf.size();
    if (measure(w, stem_len) > 1) {
      if (suf == "ion" && stem_len > 0 && w[stem_len - 1] != 's' && w[stem_len - 1] != 't')
        break;
      w.resize(stem_len);
    }
    break;
  }

  // Step 5a
  if (ends_with(w, "e")) {
    std::size_t stem_len = w.size() - 1;
    int m = measure(w, stem_len);
    if (m > 1 || (m == 1 && !ends_cvc(w, stem_len))) w.resize(stem_len);
  }

  // Step 5b
  if (ends_with(w, "l") && ends_double_consonant(w) && measure(w, w.size()) > 1)
    w.resize(w.size() - 1);

  return word;
}

}  // namespace reveval::stem
