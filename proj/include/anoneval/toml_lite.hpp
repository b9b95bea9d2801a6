// Copyright 2026 anoneval authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Minimal TOML subset parser for run configs, producing nlohmann::json.
// Supported: comments, [tables], [[arrays of tables]], bare keys,
// basic strings, integers, floats, booleans, and flat arrays of scalars.
// Dotted keys, inline tables, dates and multiline strings are not.

#ifndef ANONEVAL_TOML_LITE_HPP_
#define ANONEVAL_TOML_LITE_HPP_

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anoneval/errors.hpp"

namespace anoneval::toml_lite {

namespace detail {

[[noreturn]] inline void fail(std::size_t lineno, const std::string& what) {
  raise(errc::config_error, "TOML line " + std::to_string(lineno) + ": " + what);
}

inline std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool bare_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

// Removes a trailing comment, respecting quotes.
inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::string parse_basic_string(const std::string& text, std::size_t lineno) {
  if (text.size() < 2 || text.front() != '"' || text.back() != '"')
    fail(lineno, "expected a quoted string: " + text);
  std::string out;
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    char c = text[i];
    if (c == '\\') {
      if (i + 2 >= text.size()) fail(lineno, "dangling escape");
      const char esc = text[++i];
      switch (esc) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail(lineno, std::string("unsupported escape \\") + esc);
      }
    } else if (c == '"') {
      fail(lineno, "unexpected '\"' inside string");
    } else {
      out += c;
    }
  }
  return out;
}

inline nlohmann::json parse_scalar(const std::string& raw, std::size_t lineno) {
  const std::string text = strip(raw);
  if (text.empty()) fail(lineno, "missing value");
  if (text.front() == '"') return parse_basic_string(text, lineno);
  if (text == "true") return true;
  if (text == "false") return false;
  const bool looks_float = text.find_first_of(".eE") != std::string::npos &&
                           text.find_first_not_of("+-0123456789.eE") == std::string::npos;
  try {
    std::size_t used = 0;
    if (!looks_float) {
      const long long v = std::stoll(text, &used);
      if (used == text.size()) return v;
    }
    const double d = std::stod(text, &used);
    if (used == text.size()) return d;
  } catch (const std::exception&) {
  }
  fail(lineno, "cannot parse value: " + text);
}

inline nlohmann::json parse_value(const std::string& raw, std::size_t lineno) {
  const std::string text = strip(raw);
  if (text.empty()) fail(lineno, "missing value");
  if (text.front() != '[') return parse_scalar(text, lineno);
  if (text.back() != ']') fail(lineno, "unterminated array");
  nlohmann::json arr = nlohmann::json::array();
  std::string body = text.substr(1, text.size() - 2);
  // Split on commas outside quotes.
  std::vector<std::string> items;
  std::string current;
  bool in_string = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (in_string) {
      current += c;
      if (c == '\\' && i + 1 < body.size()) current += body[++i];
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
      current += c;
    } else if (c == ',') {
      items.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  if (in_string) fail(lineno, "unterminated string in array");
  if (!strip(current).empty()) items.push_back(current);
  for (const auto& item : items) {
    if (strip(item).empty()) fail(lineno, "empty array element");
    arr.push_back(parse_scalar(item, lineno));
  }
  return arr;
}

}  // namespace detail

inline nlohmann::json parse(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;

  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = detail::strip(detail::strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      const bool array_table = line.rfind("[[", 0) == 0;
      const std::string closer = array_table ? "]]" : "]";
      if (line.size() < closer.size() + (array_table ? 2 : 1) ||
          line.substr(line.size() - closer.size()) != closer)
        detail::fail(lineno, "malformed table header: " + line);
      const std::string name = detail::strip(line.substr(
          array_table ? 2 : 1, line.size() - (array_table ? 4 : 2)));
      if (!detail::bare_key(name))
        detail::fail(lineno, "unsupported table name: '" + name + "'");
      if (array_table) {
        if (!root.contains(name)) root[name] = nlohmann::json::array();
        if (!root[name].is_array()) detail::fail(lineno, "'" + name + "' is not an array");
        root[name].push_back(nlohmann::json::object());
        current = &root[name].back();
      } else {
        if (root.contains(name) && !root[name].is_object())
          detail::fail(lineno, "'" + name + "' redefined as table");
        if (!root.contains(name)) root[name] = nlohmann::json::object();
        current = &root[name];
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) detail::fail(lineno, "expected key = value: " + line);
    const std::string key = detail::strip(line.substr(0, eq));
    if (!detail::bare_key(key)) detail::fail(lineno, "unsupported key: '" + key + "'");
    if (current->contains(key)) detail::fail(lineno, "duplicate key: '" + key + "'");
    (*current)[key] = detail::parse_value(line.substr(eq + 1), lineno);
  }
  return root;
}

inline nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::config_error, "cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

}  // namespace anoneval::toml_lite

#endif  // ANONEVAL_TOML_LITE_HPP_
