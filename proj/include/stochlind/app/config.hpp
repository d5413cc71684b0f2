// config.hpp: scenario configuration files.
//
// Grammar (one entry per line, surrounding whitespace ignored):
//   line    := blank | comment | section | entry
//   comment := ('#' | ';') any
//   section := '[' name ']'            one of grid, ensemble, params, output
//   entry   := key '=' value           value runs to end of line or to a
//                                      '#' preceded by whitespace
// Entries before the first section are top-level; only `scenario` is allowed
// there. Duplicate keys and keys unknown to the scenario are errors. Lists
// are comma-separated; complex numbers are written as "re, im".

#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace stochlind::app {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_real(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("key '" + key + "': expected a real number, got '" + text + "'");
  }
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

using Section = std::map<std::string, std::string>;

struct ScenarioConfig {
  std::string scenario;
  std::map<std::string, Section> sections;  // grid, ensemble, params, output
  std::string source;                       // file name, for messages

  const Section& section(const std::string& name) const {
    static const Section empty;
    auto it = sections.find(name);
    return it == sections.end() ? empty : it->second;
  }

  bool has(const std::string& sec, const std::string& key) const { return section(sec).count(key) > 0; }

  const std::string& raw(const std::string& sec, const std::string& key) const {
    auto& s = section(sec);
    auto it = s.find(key);
    if (it == s.end()) throw ConfigError("missing key [" + sec + "] " + key);
    return it->second;
  }

  double real(const std::string& sec, const std::string& key) const { return parse_real(key, raw(sec, key)); }
  std::uint64_t integer(const std::string& sec, const std::string& key) const {
    return parse_unsigned(key, raw(sec, key));
  }
  std::vector<double> reals(const std::string& sec, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(sec, key))) out.push_back(parse_real(key, item));
    return out;
  }
  std::string text(const std::string& sec, const std::string& key) const { return trim(raw(sec, key)); }

  void set(const std::string& sec, const std::string& key, const std::string& value) { sections[sec][key] = value; }
};

inline const std::set<std::string>& known_sections() {
  static const std::set<std::string> s{"grid", "ensemble", "params", "output"};
  return s;
}

inline ScenarioConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  ScenarioConfig cfg;
  cfg.source = source;
  std::string line, current;
  std::set<std::string> seen_top;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "malformed section header");
      current = trim(s.substr(1, s.size() - 2));
      if (!known_sections().count(current)) throw ConfigError(where + "unknown section [" + current + "]");
      cfg.sections[current];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    std::string value = s.substr(eq + 1);
    for (std::size_t i = 1; i < value.size(); ++i) {
      if (value[i] == '#' && std::isspace(static_cast<unsigned char>(value[i - 1]))) {
        value.resize(i);
        break;
      }
    }
    value = trim(value);
    if (key.empty()) throw ConfigError(where + "empty key");
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        throw ConfigError(where + "malformed key '" + key + "'");
    if (current.empty()) {
      if (key != "scenario") throw ConfigError(where + "unknown top-level key '" + key + "'");
      if (!seen_top.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
      cfg.scenario = value;
      continue;
    }
    auto& sec = cfg.sections[current];
    if (sec.count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
    sec[key] = value;
  }
  if (cfg.scenario.empty()) throw ConfigError(source + ": missing 'scenario = ...'");
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

}  // namespace stochlind::app
