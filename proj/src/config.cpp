#include "qregress/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <limits>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qregress/error.hpp"

namespace qregress {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw FormatError("config: '" + key + "' expects a number, got '" + s + "'");
  return v;
}

template <typename T>
T to_integer(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw FormatError("config: '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::stringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError(origin + ":" + std::to_string(number) + ": empty key");
    for (char ch : key)
      if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-'))
        throw FormatError(origin + ":" + std::to_string(number) + ": invalid key '" + key + "'");
    c.values_[key] = trim(line.substr(eq + 1));
    c.origin_[key] = origin + ":" + std::to_string(number);
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = parse(ss.str(), path);
  c.base_dir_ = std::filesystem::path(path).parent_path().string();
  return c;
}

std::optional<std::string> Config::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  return v ? to_double(key, *v) : fallback;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto v = find(key);
  return v ? to_integer<std::int64_t>(key, *v) : fallback;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto v = find(key);
  return v ? to_integer<std::uint64_t>(key, *v) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw FormatError("config: '" + key + "' expects a boolean, got '" + *v + "'");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(*v)) out.push_back(to_integer<std::size_t>(key, item));
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const auto v = find(key);
  return v ? split_list(*v) : fallback;
}

void Config::check_keys(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (const auto& k : known) {
      if (!k.empty() && k.back() == '*') {
        if (key.compare(0, k.size() - 1, k, 0, k.size() - 1) == 0) ok = true;
      } else if (key == k) {
        ok = true;
      }
      if (ok) break;
    }
    if (!ok) {
      const auto it = origin_.find(key);
      throw FormatError((it != origin_.end() ? it->second + ": " : std::string()) + "unknown config key '" + key + "'");
    }
  }
}

std::string Config::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace qregress
