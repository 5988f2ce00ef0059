#pragma once

// Reader for the experiment files: a TOML subset with top-level keys,
// [section] headers, strings, integers, floats, booleans and arrays.
// Every key remembers its line for diagnostics.

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scrambling/error.hpp"

namespace scrambling {

struct Diagnostic {
  int line = 0;  // 0 when the problem has no single line (e.g. a missing key)
  std::string message;

  std::string str() const { return line > 0 ? "line " + std::to_string(line) + ": " + message : message; }
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<Diagnostic> d) : Error(join(d)), diagnostics(std::move(d)) {}
  std::vector<Diagnostic> diagnostics;

 private:
  static std::string join(const std::vector<Diagnostic>& d) {
    std::string s;
    for (const auto& x : d) s += (s.empty() ? "" : "\n") + x.str();
    return s;
  }
};

struct ConfigDocument {
  nlohmann::json root = nlohmann::json::object();
  std::map<std::string, int> lines;  // "section.key" or "key" -> line
  std::vector<Diagnostic> syntax_errors;

  int line_of(const std::string& path) const {
    auto it = lines.find(path);
    return it == lines.end() ? 0 : it->second;
  }
};

namespace detail {

class TomlLineParser {
 public:
  TomlLineParser(const std::string& text, int line) : s_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  std::size_t pos() const { return pos_; }

  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    return scalar();
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError({{line_, what}}); }

 private:
  nlohmann::json basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape in string");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json literal_string() {
    const std::size_t end = s_.find('\'', pos_ + 1);
    if (end == std::string::npos) fail("unterminated string");
    std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
    pos_ = end + 1;
    return out;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    for (;;) {
      skip_ws_and_comments();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_ws_and_comments();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ < s_.size() && s_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  void skip_ws_and_comments() {
    for (;;) {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (pos_ < s_.size() && s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        continue;
      }
      return;
    }
  }

  nlohmann::json scalar() {
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != '#' &&
           !std::isspace(static_cast<unsigned char>(s_[end])))
      ++end;
    std::string tok = s_.substr(pos_, end - pos_);
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
    if (tok == "-inf") return -std::numeric_limits<double>::infinity();
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    if (clean.empty()) fail("missing value");
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      } else {
        const long long v = std::stoll(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_;
};

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_basic = false, in_literal = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_basic) {
      if (c == '\\') ++i;
      else if (c == '"') in_basic = false;
    } else if (in_literal) {
      if (c == '\'') in_literal = false;
    } else if (c == '"') {
      in_basic = true;
    } else if (c == '\'') {
      in_literal = true;
    } else if (c == '#') {
      while (i + 1 < s.size() && s[i + 1] != '\n') ++i;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

}  // namespace detail

/// Parses the text; syntax problems are collected, not thrown.
inline ConfigDocument parse_config(const std::string& text) {
  ConfigDocument doc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const int start_line = line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    try {
      if (line[0] == '[') {
        const auto close = line.find(']');
        if (close == std::string::npos) throw ConfigError({{start_line, "unterminated section header"}});
        const std::string name = detail::trim(line.substr(1, close - 1));
        const std::string rest = detail::trim(line.substr(close + 1));
        if (!rest.empty() && rest[0] != '#') throw ConfigError({{start_line, "unexpected text after section header"}});
        if (!detail::valid_key(name)) throw ConfigError({{start_line, "invalid section name '" + name + "'"}});
        if (doc.root.contains(name)) throw ConfigError({{start_line, "section [" + name + "] defined twice"}});
        section = name;
        doc.root[section] = nlohmann::json::object();
        doc.lines[section] = start_line;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError({{start_line, "expected 'key = value'"}});
      const std::string key = detail::trim(line.substr(0, eq));
      if (!detail::valid_key(key)) throw ConfigError({{start_line, "invalid key '" + key + "'"}});
      std::string value_text = line.substr(eq + 1);
      while (detail::bracket_balance(value_text) > 0 && std::getline(in, raw)) {
        ++line_no;
        value_text += "\n" + raw;
      }
      detail::TomlLineParser p(value_text, start_line);
      nlohmann::json v = p.value();
      if (!p.at_end_or_comment()) p.fail("unexpected text after value of '" + key + "'");
      nlohmann::json& target = section.empty() ? doc.root : doc.root[section];
      const std::string path = section.empty() ? key : section + "." + key;
      if (target.contains(key)) throw ConfigError({{start_line, "key '" + path + "' defined twice"}});
      target[key] = std::move(v);
      doc.lines[path] = start_line;
    } catch (const ConfigError& e) {
      doc.syntax_errors.insert(doc.syntax_errors.end(), e.diagnostics.begin(), e.diagnostics.end());
    }
  }
  return doc;
}

inline ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{0, "cannot open config file '" + path + "'"}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace scrambling
