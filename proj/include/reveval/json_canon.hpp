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

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace reveval {

/// Fixed-format double: 17 significant digits, enough to round-trip any
/// IEEE-754 double and stable across platforms. NaN/Inf are not valid
/// JSON; callers represent "undefined" as null instead.
inline std::string canonical_double(double v) {
  if (!std::isfinite(v))
    throw std::invalid_argument("canonical JSON cannot encode non-finite number");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void escape_string(const std::string& s, std::string& out) {
  out.push_back('"');
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
}

inline void dump_canonical(const nlohmann::json& j, std::string& out) {
  using value_t = nlohmann::json::value_t;
  switch (j.type()) {
    case value_t::null: out += "null"; break;
    case value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
    case value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case value_t::number_float:
      out += canonical_double(j.get<double>());
      break;
    case value_t::string: escape_string(j.get_ref<const std::string&>(), out); break;
    case value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& el : j) {
        if (!first) out.push_back(',');
        first = false;
        dump_canonical(el, out);
      }
      out.push_back(']');
      break;
    }
    case value_t::object: {
      // nlohmann's object_t is std::map, so iteration order is already
      // byte-wise sorted by key.
      out.push_back('{');
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        escape_string(it.key(), out);
        out.push_back(':');
        dump_canonical(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    default:
      throw std::invalid_argument("canonical JSON cannot encode binary/discarded values");
  }
}

}  // namespace detail

/// Canonical serialization: sorted object keys, no whitespace, %.17g
/// floats. Equal documents always produce identical bytes, which is what
/// makes artifact digests and report byte-comparisons meaningful.
inline std::string canonical_dump(const nlohmann::json& j) {
  std::string out;
  detail::dump_canonical(j, out);
  return out;
}

}  // namespace reveval
