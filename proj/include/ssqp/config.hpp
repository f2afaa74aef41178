#pragma once

#include <map>
#include <set>
#include <string>

#include "ssqp/common.hpp"

namespace ssqp {

/// Flat `key = value` configuration text: UTF-8 lines, `#` comments, dotted
/// keys. Reads track which keys were consumed so unknown keys can be
/// reported by name.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  long get_long(const std::string& key, long fallback);
  bool get_bool(const std::string& key, bool fallback);

  /// Throws ConfigError naming the first key that was never consumed.
  void ensure_all_consumed() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

}  // namespace ssqp
