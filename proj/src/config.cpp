#include "ssqp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ssqp {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigError,
            "config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), ErrorCode::ConfigError,
            "config: empty key on line " + std::to_string(lineno));
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  consumed_.insert(key);
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  consumed_.insert(key);
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  require(end != it->second.c_str() && *end == '\0', ErrorCode::ConfigError,
          "config: key '" + key + "' has non-numeric value '" + it->second +
              "'");
  return v;
}

long KeyValueConfig::get_long(const std::string& key, long fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  consumed_.insert(key);
  char* end = nullptr;
  const long v = std::strtol(it->second.c_str(), &end, 10);
  require(end != it->second.c_str() && *end == '\0', ErrorCode::ConfigError,
          "config: key '" + key + "' has non-integer value '" + it->second +
              "'");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  consumed_.insert(key);
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::ConfigError,
       "config: key '" + key + "' has non-boolean value '" + v + "'");
}

void KeyValueConfig::ensure_all_consumed() const {
  for (const auto& [key, value] : values_) {
    require(consumed_.count(key) > 0, ErrorCode::ConfigError,
            "config: unknown key '" + key + "'");
  }
}

}  // namespace ssqp
