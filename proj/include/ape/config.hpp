#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ape/error.hpp"

namespace ape {

// Flat dotted-key settings ("model.cell_size=128"), one per line. '#' lines
// are comments; later assignments to a key win. Values keep internal spaces.
class Config {
 public:
  static Config from_string(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ParseError(origin + " line " + std::to_string(line_no) + ": expected key=value");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ParseError(origin + " line " + std::to_string(line_no) + ": empty key");
      c.kv_[key] = value;
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_string(buf.str(), path);
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback = "") const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': '" + it->second + "' is not a number");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      unsigned long long v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ParseError("config key '" + key + "': '" + it->second + "' is not a boolean");
  }

  // Values from `overrides` replace values already present here.
  void merge_over(const Config& overrides) {
    for (const auto& [k, v] : overrides.kv_) kv_[k] = v;
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << "=" << v << "\n";
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace ape
