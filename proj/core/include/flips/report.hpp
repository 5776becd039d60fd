#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flips {

// FNV-1a 64-bit hash; used to stamp reports with a configuration fingerprint.
std::uint64_t fnv1a64(std::string_view s);
std::string hex64(std::uint64_t v);

// Flat "key = value" configuration files: one pair per line, '#' comments,
// blank lines ignored. Order is preserved; later keys override earlier ones.
struct FlatConfig {
  std::vector<std::pair<std::string, std::string>> items;

  static FlatConfig parse(std::istream& in);
  static FlatConfig parse_file(const std::string& path);

  const std::string* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, std::string value);

  // canonical "key=value\n" rendering (last occurrence wins, insertion order)
  std::string canonical() const;
  std::string hash_hex() const { return hex64(fnv1a64(canonical())); }
};

}  // namespace flips
