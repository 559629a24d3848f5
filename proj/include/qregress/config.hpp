#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qregress {

/// Line-based `key = value` configuration with dotted keys. `#` starts a
/// comment; blank lines are ignored; later assignments override earlier ones.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  /// Directory of the file the config was loaded from, empty otherwise.
  const std::string& base_dir() const noexcept { return base_dir_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::optional<std::string> find(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws FormatError naming the first key outside `known` (entries ending
  /// in '*' match any key with that prefix).
  void check_keys(const std::vector<std::string>& known) const;

  /// Canonical text form: sorted `key = value` lines.
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
  std::string base_dir_;
};

}  // namespace qregress
