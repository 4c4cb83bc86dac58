#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grec/error.hpp"

// A small TOML subset: [section] headers, key = value lines, '#' comments,
// basic and literal strings, integers, floats (inf/nan included), booleans
// and single-line arrays of scalars.
namespace grec::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> v;

  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_float() const { return std::holds_alternative<double>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }
  bool operator==(const Value& o) const {
    // nan == nan keeps round trips comparable
    if (is_float() && o.is_float() && std::isnan(std::get<double>(v)) &&
        std::isnan(std::get<double>(o.v))) {
      return true;
    }
    return v == o.v;
  }
};

using Table = std::map<std::string, Value>;
using Document = std::map<std::string, Table>;  // "" holds top-level keys

namespace detail {

[[noreturn]] inline void fail(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool bare_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-';
}

class Parser {
 public:
  Parser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  Value value() {
    skip_ws();
    if (pos_ >= s_.size()) fail(line_, "missing value");
    const char c = s_[pos_];
    if (c == '"') return {basic_string()};
    if (c == '\'') return {literal_string()};
    if (c == '[') return {array()};
    return scalar();
  }

  void finish() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail(line_, "unexpected trailing text");
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  std::string basic_string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        switch (s_[pos_++]) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(line_, "unsupported escape");
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail(line_, "unterminated string");
    ++pos_;
    return out;
  }

  std::string literal_string() {
    const auto end = s_.find('\'', pos_ + 1);
    if (end == std::string_view::npos) fail(line_, "unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  Array array() {
    Array out;
    ++pos_;
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail(line_, "unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ >= s_.size() || s_[pos_] != ']') {
        fail(line_, "expected ',' or ']' in array");
      }
    }
  }

  Value scalar() {
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != '#' && s_[end] != ' ' &&
           s_[end] != '\t') {
      ++end;
    }
    std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return {true};
    if (tok == "false") return {false};
    std::string body = tok;
    std::erase(body, '_');
    const bool neg = !body.empty() && body[0] == '-';
    const std::string_view mag = (!body.empty() && (body[0] == '+' || body[0] == '-'))
                                     ? std::string_view(body).substr(1)
                                     : std::string_view(body);
    if (mag == "inf") return {neg ? -INFINITY : INFINITY};
    if (mag == "nan") return {std::nan("")};
    if (body.find_first_of(".eE") == std::string::npos) {
      std::int64_t i = 0;
      const char* b = body.data() + (body[0] == '+' ? 1 : 0);
      auto [p, ec] = std::from_chars(b, body.data() + body.size(), i);
      if (ec == std::errc{} && p == body.data() + body.size()) return {i};
      fail(line_, "bad value '" + tok + "'");
    }
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(body, &used);
    } catch (const std::exception&) {
      fail(line_, "bad value '" + tok + "'");
    }
    if (used != body.size()) fail(line_, "bad value '" + tok + "'");
    return {d};
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline std::string format_float(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);  // shortest round-trip form
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace detail

inline Document parse(std::istream& in) {
  Document doc;
  doc[""];
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) detail::fail(line_no, "unterminated section header");
      section = std::string(detail::trim(line.substr(1, close - 1)));
      if (section.empty()) detail::fail(line_no, "empty section name");
      const auto rest = detail::trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') detail::fail(line_no, "unexpected trailing text");
      if (doc.contains(section) && section != "") detail::fail(line_no, "duplicate section [" + section + "]");
      doc[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) detail::fail(line_no, "expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (key.empty()) detail::fail(line_no, "empty key");
    for (char c : key) {
      if (!detail::bare_key_char(c)) detail::fail(line_no, "invalid key '" + key + "'");
    }
    detail::Parser p(line.substr(eq + 1), line_no);
    auto v = p.value();
    p.finish();
    if (!doc[section].emplace(key, std::move(v)).second) {
      detail::fail(line_no, "duplicate key '" + key + "'");
    }
  }
  return doc;
}

inline Document parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

inline std::string format(const Value& v) {
  if (v.is_bool()) return std::get<bool>(v.v) ? "true" : "false";
  if (v.is_int()) return std::to_string(std::get<std::int64_t>(v.v));
  if (v.is_float()) return detail::format_float(std::get<double>(v.v));
  if (v.is_string()) return detail::quote(std::get<std::string>(v.v));
  std::string out = "[";
  const auto& a = std::get<Array>(v.v);
  for (std::size_t i = 0; i < a.size(); ++i) out += (i ? ", " : "") + format(a[i]);
  return out + "]";
}

inline void write(std::ostream& os, const Document& doc) {
  if (auto it = doc.find(""); it != doc.end()) {
    for (const auto& [k, v] : it->second) os << k << " = " << format(v) << '\n';
  }
  for (const auto& [name, table] : doc) {
    if (name.empty()) continue;
    os << "\n[" << name << "]\n";
    for (const auto& [k, v] : table) os << k << " = " << format(v) << '\n';
  }
}

}  // namespace grec::toml
