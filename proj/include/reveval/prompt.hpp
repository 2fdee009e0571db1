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

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "reveval/domain.hpp"

namespace reveval::prompt {

enum class TemplateId {
  RefFreePairwise,
  RefBasedPairwise,
  RefFreeScore,
  RefBasedScore,
  RevisePairwise,
  ReviseScore,
  DirectResponse,
};

inline std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::RefFreePairwise: return "ref_free_pairwise";
    case TemplateId::RefBasedPairwise: return "ref_based_pairwise";
    case TemplateId::RefFreeScore: return "ref_free_score";
    case TemplateId::RefBasedScore: return "ref_based_score";
    case TemplateId::RevisePairwise: return "revise_pairwise";
    case TemplateId::ReviseScore: return "revise_score";
    case TemplateId::DirectResponse: return "direct_response";
  }
  return "";
}

inline std::optional<TemplateId> parse_template_id(std::string_view s) {
  for (TemplateId id : {TemplateId::RefFreePairwise, TemplateId::RefBasedPairwise,
                        TemplateId::RefFreeScore, TemplateId::RefBasedScore,
                        TemplateId::RevisePairwise, TemplateId::ReviseScore,
                        TemplateId::DirectResponse}) {
    if (to_string(id) == s) return id;
  }
  return std::nullopt;
}

struct Message {
  std::string role;
  std::string content;
  bool operator==(const Message&) const = default;
};

using SlotMap = std::map<std::string, std::string>;

inline const std::set<std::string>& recognized_slots() {
  static const std::set<std::string> slots{
      "instruction", "rubric",    "response",         "response_a",
      "response_b",  "reference", "revision_guidance"};
  return slots;
}

struct RenderError : std::runtime_error {
  enum class Kind { MissingSlot, UnknownSlot };
  Kind kind;
  std::string slot;
  RenderError(Kind k, std::string s)
      : std::runtime_error(std::string(k == Kind::MissingSlot ? "missing slot: " : "unknown slot: ") + s),
        kind(k),
        slot(std::move(s)) {}
};

/// One versioned template body, pre-split into system and user parts.
/// Placeholders use {slot_name}; the required slot set is derived by
/// scanning the body at load time.
struct Template {
  TemplateId id = TemplateId::DirectResponse;
  std::string version;
  std::string system_text;
  std::string user_text;
  std::set<std::string> required_slots;
};

namespace detail {

inline bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Scans `text` for {slot} placeholders; verifies names against the
// recognized list. Anything not shaped like a placeholder is literal.
inline std::set<std::string> scan_placeholders(std::string_view text) {
  std::set<std::string> found;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') { ++i; continue; }
    std::size_t j = i + 1;
    while (j < text.size() && is_slot_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      std::string name(text.substr(i + 1, j - i - 1));
      if (!recognized_slots().count(name))
        throw RenderError(RenderError::Kind::UnknownSlot, name);
      found.insert(std::move(name));
      i = j + 1;
    } else {
      ++i;
    }
  }
  return found;
}

inline std::string substitute(std::string_view text, const SlotMap& slots) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') { out.push_back(text[i++]); continue; }
    std::size_t j = i + 1;
    while (j < text.size() && is_slot_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      std::string name(text.substr(i + 1, j - i - 1));
      auto it = slots.find(name);
      if (it == slots.end() || it->second.empty())
        throw RenderError(RenderError::Kind::MissingSlot, name);
      out += it->second;  // values are inserted verbatim, never re-scanned
      i = j + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

}  // namespace detail

/// Deterministic render: fixed system/user split, all required slots
/// substituted, no unresolved placeholders. Extra slots are rejected so
/// a caller cannot silently pass content that the template drops.
inline std::vector<Message> render(const Template& tpl, const SlotMap& slots) {
  for (const auto& [name, value] : slots) {
    (void)value;
    if (!recognized_slots().count(name))
      throw RenderError(RenderError::Kind::UnknownSlot, name);
    if (!tpl.required_slots.count(name))
      throw RenderError(RenderError::Kind::UnknownSlot, name);
  }
  std::vector<Message> messages;
  if (!tpl.system_text.empty())
    messages.push_back({"system", detail::substitute(tpl.system_text, slots)});
  messages.push_back({"user", detail::substitute(tpl.user_text, slots)});
  return messages;
}

/// Loads templates from a directory holding manifest.json plus one UTF-8
/// text file per template. Template files contain a "<<<system>>>"
/// section followed by a "<<<user>>>" section.
class TemplateRegistry {
 public:
  static TemplateRegistry load_dir(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open template manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(in);
    TemplateRegistry reg;
    for (const auto& [key, entry] : manifest.at("templates").items()) {
      auto id = parse_template_id(key);
      if (!id) throw std::runtime_error("manifest names unknown template id: " + key);
      Template tpl;
      tpl.id = *id;
      tpl.version = entry.at("version").get<std::string>();
      const auto file = dir / entry.at("file").get<std::string>();
      std::ifstream body_in(file);
      if (!body_in) throw std::runtime_error("cannot open template file " + file.string());
      std::stringstream ss;
      ss << body_in.rdbuf();
      parse_body(ss.str(), tpl);
      reg.templates_.emplace(*id, std::move(tpl));
    }
    for (TemplateId id : {TemplateId::RefFreePairwise, TemplateId::RefBasedPairwise,
                          TemplateId::RefFreeScore, TemplateId::RefBasedScore,
                          TemplateId::RevisePairwise, TemplateId::ReviseScore,
                          TemplateId::DirectResponse}) {
      if (!reg.templates_.count(id))
        throw std::runtime_error("manifest missing template: " + std::string(to_string(id)));
    }
    return reg;
  }

  const Template& get(TemplateId id) const { return templates_.at(id); }

  std::string version(TemplateId id) const { return templates_.at(id).version; }

 private:
  static void parse_body(const std::string& raw, Template& tpl) {
    constexpr std::string_view sys_mark = "<<<system>>>\n";
    constexpr std::string_view user_mark = "<<<user>>>\n";
    const auto sys_pos = raw.find(sys_mark);
    const auto user_pos = raw.find(user_mark);
    if (user_pos == std::string::npos)
      throw std::runtime_error("template body lacks a <<<user>>> section");
    if (sys_pos != std::string::npos && sys_pos < user_pos) {
      tpl.system_text = trim(raw.substr(sys_pos + sys_mark.size(), user_pos - sys_pos - sys_mark.size()));
    }
    tpl.user_text = trim(raw.substr(user_pos + user_mark.size()));
    tpl.required_slots = detail::scan_placeholders(tpl.system_text);
    auto user_slots = detail::scan_placeholders(tpl.user_text);
    tpl.required_slots.insert(user_slots.begin(), user_slots.end());
  }

  static std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  }

  std::map<TemplateId, Template> templates_;
};

// -------- verdict parsing --------
//
// Judges conclude with a double-bracket marker; chain-of-thought output
// routinely mentions both labels before concluding, so the LAST marker
// wins. Parsers are pure and never throw: failure states are data.

struct PairwiseParse {
  std::optional<Preference> preference;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  bool ok() const { return preference.has_value(); }
};

inline PairwiseParse parse_pairwise_verdict(std::string_view completion) noexcept {
  PairwiseParse out;
  struct Marker { std::string_view text; Preference pref; };
  static constexpr Marker markers[] = {{"[[A]]", Preference::First},
                                       {"[[B]]", Preference::Second},
                                       {"[[C]]", Preference::Tie}};
  std::size_t best = std::string_view::npos;
  for (const auto& m : markers) {
    const auto pos = completion.rfind(m.text);
    if (pos != std::string_view::npos && (best == std::string_view::npos || pos > best)) {
      best = pos;
      out.preference = m.pref;
      out.span_begin = pos;
      out.span_end = pos + m.text.size();
    }
  }
  return out;
}

struct ScoreParse {
  std::optional<int> score;     // set only when in scale
  bool out_of_scale = false;
  long long raw_value = 0;      // the integer found, when any
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  bool ok() const { return score.has_value(); }
};

/// Extracts the integer inside the last [[n]] marker and checks it
/// against the inclusive scale. No marker at all leaves `score` and
/// `out_of_scale` unset, which is the ParseError state.
inline ScoreParse parse_score_verdict(std::string_view completion, int scale_lo,
                                      int scale_hi) noexcept {
  ScoreParse out;
  std::size_t i = 0;
  while (true) {
    const auto open = completion.find("[[", i);
    if (open == std::string_view::npos) break;
    std::size_t j = open + 2;
    std::size_t digits_begin = j;
    if (j < completion.size() && completion[j] == '-') ++j;
    std::size_t first_digit = j;
    while (j < completion.size() && completion[j] >= '0' && completion[j] <= '9') ++j;
    if (j > first_digit && j + 1 < completion.size() && completion[j] == ']' &&
        completion[j + 1] == ']') {
      errno = 0;
      const std::string num(completion.substr(digits_begin, j - digits_begin));
      const long long value = std::strtoll(num.c_str(), nullptr, 10);
      const bool overflowed = errno == ERANGE;
      out.raw_value = value;
      out.span_begin = open;
      out.span_end = j + 2;
      if (!overflowed && value >= scale_lo && value <= scale_hi) {
        out.score = static_cast<int>(value);
        out.out_of_scale = false;
      } else {
        out.score.reset();
        out.out_of_scale = true;
      }
      i = j + 2;
    } else {
      i = open + 2;
    }
  }
  return out;
}

/// Rubric text as it appears in prompts. The integer scale is included
/// only where a rating is requested.
inline std::string format_rubric(const Rubric& r, bool include_scale) {
  std::string s = r.name;
  if (!r.description.empty()) s += ": " + r.description;
  if (include_scale) {
    s += " (rate on an integer scale from " + std::to_string(r.scale_lo) + " to " +
         std::to_string(r.scale_hi) + ")";
  }
  return s;
}

}  // namespace reveval::prompt
