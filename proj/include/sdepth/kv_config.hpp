#pragma once

// Flat "key = value" configuration text.
//
// Lines are trimmed; empty lines and lines starting with '#' are ignored.
// Keys must be unique.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace sdepth {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Throws ConfigError naming every key not in `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;

  /// Sorted "key = value" lines.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Typed readers; each throws ConfigError naming the key on malformed values.
int parse_int(const std::string& key, const std::string& value);
int64_t parse_int64(const std::string& key, const std::string& value);
uint64_t parse_uint64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

/// Shortest round-trip text for a double ("0.0001" and "1e-4" both give "0.0001").
std::string format_double(double v);

}  // namespace sdepth
