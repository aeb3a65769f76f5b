#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace vsc {

// Flat "key = value" run-configuration files with [section] headers.
// Consumers declare the keys they understand; anything else is rejected so
// typos fail loudly instead of silently using defaults.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double num(const std::string& section, const std::string& key, double fallback) const;
  long long integer(const std::string& section, const std::string& key, long long fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;

  // Throws listing every entry whose section/key is not in `known`.
  void require_known(const std::map<std::string, std::set<std::string>>& known) const;

  const std::map<std::pair<std::string, std::string>, std::string>& entries() const {
    return entries_;
  }

 private:
  std::map<std::pair<std::string, std::string>, std::string> entries_;
  std::string origin_;
};

}  // namespace vsc
