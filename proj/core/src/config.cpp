#include "vsc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vsc {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str(), path);
}

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": malformed section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!cfg.entries_.emplace(std::make_pair(section, key), val).second)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                               "' in section [" + section + "]");
  }
  return cfg;
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
  return entries_.count({section, key}) > 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
  auto it = entries_.find({section, key});
  return it == entries_.end() ? fallback : it->second;
}

double KvConfig::num(const std::string& section, const std::string& key, double fallback) const {
  auto it = entries_.find({section, key});
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: [" + section + "] " + key + " is not a number: '" +
                             it->second + "'");
  }
}

long long KvConfig::integer(const std::string& section, const std::string& key,
                            long long fallback) const {
  auto it = entries_.find({section, key});
  if (it == entries_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config: [" + section + "] " + key + " is not an integer: '" +
                             it->second + "'");
  }
}

bool KvConfig::flag(const std::string& section, const std::string& key, bool fallback) const {
  auto it = entries_.find({section, key});
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("config: [" + section + "] " + key + " is not a boolean: '" + v + "'");
}

void KvConfig::require_known(const std::map<std::string, std::set<std::string>>& known) const {
  std::string bad;
  for (const auto& [sk, value] : entries_) {
    (void)value;
    auto sec = known.find(sk.first);
    if (sec == known.end() || !sec->second.count(sk.second)) {
      bad += (bad.empty() ? "" : ", ") + std::string("[") + sk.first + "] " + sk.second;
    }
  }
  if (!bad.empty())
    throw std::runtime_error("config: unknown keys in " + origin_ + ": " + bad);
}

}  // namespace vsc
