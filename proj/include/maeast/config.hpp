#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "maeast/common.hpp"

namespace maeast {

/// Flat `key = value` configuration, one entry per line, `#` starts a comment.
/// Getters record which keys were consumed so leftovers can be rejected.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  Index get_int(const std::string& key) const;
  Index get_int(const std::string& key, Index fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ConfigError naming the first key no getter asked for.
  void reject_unused() const;

 private:
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace maeast
