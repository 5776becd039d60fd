#include "flips/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace flips {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

FlatConfig FlatConfig::parse(std::istream& in) {
  FlatConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    cfg.items.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return cfg;
}

FlatConfig FlatConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse(in);
}

const std::string* FlatConfig::find(const std::string& key) const {
  const std::string* hit = nullptr;
  for (const auto& [k, v] : items)
    if (k == key) hit = &v;  // last occurrence wins
  return hit;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  const double out = std::stod(*v, &used);
  if (used != v->size()) throw std::runtime_error("config key " + key + ": not a number");
  return out;
}

long long FlatConfig::get_int(const std::string& key, long long fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  const long long out = std::stoll(*v, &used);
  if (used != v->size()) throw std::runtime_error("config key " + key + ": not an integer");
  return out;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw std::runtime_error("config key " + key + ": not a boolean");
}

void FlatConfig::set(const std::string& key, std::string value) {
  items.emplace_back(key, std::move(value));
}

std::string FlatConfig::canonical() const {
  // each key once, at its last occurrence, with its final value
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    bool overridden = false;
    for (std::size_t j = i + 1; j < items.size() && !overridden; ++j)
      overridden = items[j].first == items[i].first;
    if (!overridden) out << items[i].first << '=' << items[i].second << '\n';
  }
  return out.str();
}

}  // namespace flips
