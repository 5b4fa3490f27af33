#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stcm {

/// Flat `key = value` map.
///
/// Text form: one `key = value` per line, `#` starts a comment, blank lines ignored,
/// later keys override earlier ones. Every typed read marks the key as consumed so
/// `unconsumed()` can report misspelled keys.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void merge(const Config& overrides);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& key, const std::vector<long long>& fallback) const;

  std::optional<std::string> find(const std::string& key) const;

  /// Keys never read through a typed accessor.
  std::vector<std::string> unconsumed() const;
  /// Throws ConfigError listing every unconsumed key.
  void require_all_consumed() const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace stcm
