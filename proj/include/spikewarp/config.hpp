#pragma once

// Sectioned key=value config files. '#' and ';' start comments, '[section]'
// opens a section, values are typed at read time. Keys the program never
// declares are rejected so typos fail loudly instead of silently using a
// default.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikewarp {

class Config {
 public:
  Config() = default;

  static Config from_string(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    c.origin_ = origin;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                   ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty())
          throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected key=value");
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
      const std::string full = section + "." + key;
      if (c.values_.count(full))
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                 full + "'");
      c.values_[full] = val;
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_string(buf.str(), path);
  }

  bool has(const std::string& section, const std::string& key) const {
    declared_.insert(section + "." + key);
    return values_.count(section + "." + key) > 0;
  }

  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const {
    declared_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    return it == values_.end() ? fallback : it->second;
  }

  std::int64_t get_i64(const std::string& section, const std::string& key,
                       std::int64_t fallback) const {
    declared_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    std::int64_t v;
    try {
      v = std::stoll(it->second, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error(bad_value(section, key, "integer"));
    }
    if (pos != it->second.size()) throw std::runtime_error(bad_value(section, key, "integer"));
    return v;
  }

  double get_f64(const std::string& section, const std::string& key, double fallback) const {
    declared_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    double v;
    try {
      v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error(bad_value(section, key, "number"));
    }
    if (pos != it->second.size()) throw std::runtime_error(bad_value(section, key, "number"));
    return v;
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    declared_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error(bad_value(section, key, "bool (true/false/1/0)"));
  }

  std::vector<std::int64_t> get_i64_list(const std::string& section, const std::string& key,
                                         std::vector<std::int64_t> fallback) const {
    declared_.insert(section + "." + key);
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return fallback;
    std::vector<std::int64_t> out;
    std::istringstream ls(it->second);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      tok = trim(tok);
      std::size_t pos = 0;
      try {
        out.push_back(std::stoll(tok, &pos));
      } catch (const std::exception&) {
        throw std::runtime_error(bad_value(section, key, "comma-separated integers"));
      }
      if (pos != tok.size())
        throw std::runtime_error(bad_value(section, key, "comma-separated integers"));
    }
    if (out.empty()) throw std::runtime_error(bad_value(section, key, "comma-separated integers"));
    return out;
  }

  // Call after all reads: any key present in the file that no getter ever
  // asked about is a config error.
  void reject_unknown() const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : values_)
      if (!declared_.count(k)) unknown.push_back(k);
    if (!unknown.empty()) {
      std::string msg = origin_ + ": unknown config key(s):";
      for (const auto& k : unknown) msg += " " + k;
      throw std::runtime_error(msg);
    }
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::string bad_value(const std::string& section, const std::string& key,
                        const std::string& kind) const {
    return origin_ + ": key '" + section + "." + key + "' is not a valid " + kind + " (got '" +
           values_.at(section + "." + key) + "')";
  }

  std::string origin_ = "<empty>";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> declared_;
};

}  // namespace spikewarp
