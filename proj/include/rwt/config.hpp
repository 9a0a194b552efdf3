#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "rwt/error.hpp"

namespace rwt {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Flat `key = value` configuration. '#' starts a comment line. Keys are kept sorted so that
/// serialization is stable.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<stream>") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw Error(Errc::ConfigError, origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const auto key = trim(body.substr(0, eq));
      if (key.empty()) throw Error(Errc::ConfigError, origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[std::string(key)] = std::string(trim(body.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::MissingFile, "cannot open config " + path.string());
    return parse(in, path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> get_double(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) bad(key, *s);
    return v;
  }

  std::optional<long long> get_int(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) bad(key, *s);
    return v;
  }

  std::optional<bool> get_bool(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "1" || *s == "on" || *s == "yes") return true;
    if (*s == "false" || *s == "0" || *s == "off" || *s == "no") return false;
    bad(key, *s);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_string() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
  }

 private:
  [[noreturn]] static void bad(const std::string& key, const std::string& value) {
    throw Error(Errc::ConfigError, "invalid value '" + value + "' for key '" + key + "'");
  }

  std::map<std::string, std::string> values_;
};

}  // namespace rwt
