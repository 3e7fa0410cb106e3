#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "apa/core.hpp"

namespace apa::harness {

// Parse failure carrying the 1-based line it refers to (0 when not tied to a line).
class ConfigError : public InputError {
 public:
  ConfigError(std::size_t line, const std::string& what) : InputError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using Scalar = std::variant<double, std::string, bool>;

struct Value {
  std::vector<Scalar> items;
  bool is_array = false;
  std::size_t line = 0;
};

// A small TOML subset: [section] headers, key = value pairs, '#' comments,
// and values that are numbers, "strings", true/false or one-line [arrays].
class Config {
 public:
  static Config parse(std::istream& in) {
    Config config;
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw, line_no));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) throw ConfigError(line_no, "malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (!valid_name(section)) throw ConfigError(line_no, fmt::format("invalid section name '{}'", section));
        if (!config.sections_.emplace(section, line_no).second) {
          throw ConfigError(line_no, fmt::format("duplicate section [{}]", section));
        }
        config.last_line_ = line_no;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      if (!valid_name(key)) throw ConfigError(line_no, fmt::format("invalid key '{}'", key));
      if (section.empty()) throw ConfigError(line_no, fmt::format("key '{}' appears before any section", key));
      Value value = parse_value(trim(line.substr(eq + 1)), line_no);
      value.line = line_no;
      config.last_line_ = line_no;
      if (!config.values_.emplace(section + "." + key, std::move(value)).second) {
        throw ConfigError(line_no, fmt::format("duplicate key '{}' in [{}]", key, section));
      }
    }
    return config;
  }

  static Config parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, fmt::format("cannot open config '{}'", path));
    return parse(in);
  }

  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  // Line of a section header, or of the last line when the section is absent.
  std::size_t section_line(const std::string& section) const {
    const auto it = sections_.find(section);
    return it == sections_.end() ? last_line_ : it->second;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const Value* find(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::size_t line_of(const std::string& key) const {
    const Value* v = find(key);
    return v ? v->line : 0;
  }

  // Every key must be in `allowed`, otherwise the first offender is reported.
  void expect_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
      if (!allowed.count(key)) {
        const auto dot = key.find('.');
        throw ConfigError(value.line,
                          fmt::format("unknown key '{}' in [{}]", key.substr(dot + 1), key.substr(0, dot)));
      }
    }
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    const Value* v = find(key);
    if (!v) {
      if (fallback) return *fallback;
      missing(key);
    }
    if (v->is_array || v->items.size() != 1) throw ConfigError(v->line, fmt::format("'{}' must be a single number", key));
    return as_number(v->items[0], key, v->line);
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) const {
    const Value* v = find(key);
    if (!v) {
      if (fallback) return *fallback;
      missing(key);
    }
    std::vector<double> out;
    for (const auto& item : v->items) out.push_back(as_number(item, key, v->line));
    return out;
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
    const Value* v = find(key);
    if (!v) {
      if (fallback) return *fallback;
      missing(key);
    }
    if (v->is_array || v->items.size() != 1 || !std::holds_alternative<std::string>(v->items[0])) {
      throw ConfigError(v->line, fmt::format("'{}' must be a string", key));
    }
    return std::get<std::string>(v->items[0]);
  }

  std::vector<std::string> strings(const std::string& key, std::optional<std::vector<std::string>> fallback = std::nullopt) const {
    const Value* v = find(key);
    if (!v) {
      if (fallback) return *fallback;
      missing(key);
    }
    std::vector<std::string> out;
    for (const auto& item : v->items) {
      if (!std::holds_alternative<std::string>(item)) throw ConfigError(v->line, fmt::format("'{}' must hold strings", key));
      out.push_back(std::get<std::string>(item));
    }
    return out;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const Value* v = find(key);
    if (!v) return fallback;
    if (v->is_array || v->items.size() != 1 || !std::holds_alternative<bool>(v->items[0])) {
      throw ConfigError(v->line, fmt::format("'{}' must be true or false", key));
    }
    return std::get<bool>(v->items[0]);
  }

 private:
  std::map<std::string, std::size_t> sections_;
  std::map<std::string, Value> values_;
  std::size_t last_line_ = 0;

  [[noreturn]] void missing(const std::string& key) const {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    throw ConfigError(section_line(section),
                      fmt::format("missing required key '{}' in [{}]", key.substr(dot + 1), section));
  }

  static double as_number(const Scalar& s, const std::string& key, std::size_t line) {
    if (!std::holds_alternative<double>(s)) throw ConfigError(line, fmt::format("'{}' must be numeric", key));
    return std::get<double>(s);
  }

  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  }

  static bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
  }

  static std::string strip_comment(const std::string& line, std::size_t line_no) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    if (quoted) throw ConfigError(line_no, "unterminated string");
    return line;
  }

  static Scalar parse_scalar(const std::string& token, std::size_t line) {
    if (token.empty()) throw ConfigError(line, "missing value");
    if (token.front() == '"') {
      if (token.size() < 2 || token.back() != '"') throw ConfigError(line, "unterminated string");
      const std::string body = token.substr(1, token.size() - 2);
      if (body.find('"') != std::string::npos) throw ConfigError(line, "unexpected quote inside string");
      return body;
    }
    if (token == "true") return true;
    if (token == "false") return false;
    std::string digits;
    for (char c : token) {
      if (c != '_') digits.push_back(c);
    }
    if (digits == "inf" || digits == "+inf") return std::numeric_limits<double>::infinity();
    double value = 0.0;
    const char* begin = digits.data();
    const char* end = begin + digits.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError(line, fmt::format("cannot parse value '{}'", token));
    return value;
  }

  static Value parse_value(const std::string& text, std::size_t line) {
    Value out;
    if (text.empty()) throw ConfigError(line, "missing value after '='");
    if (text.front() != '[') {
      out.items.push_back(parse_scalar(text, line));
      return out;
    }
    out.is_array = true;
    if (text.back() != ']') throw ConfigError(line, "unterminated array (arrays must fit on one line)");
    const std::string body = trim(text.substr(1, text.size() - 2));
    if (body.empty()) return out;
    std::string token;
    bool quoted = false;
    for (char c : body) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        out.items.push_back(parse_scalar(trim(token), line));
        token.clear();
      } else if ((c == '[' || c == ']') && !quoted) {
        throw ConfigError(line, "nested arrays are not supported");
      } else {
        token.push_back(c);
      }
    }
    if (!trim(token).empty()) out.items.push_back(parse_scalar(trim(token), line));
    return out;
  }
};

}  // namespace apa::harness
