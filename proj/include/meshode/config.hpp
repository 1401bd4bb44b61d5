#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "meshode/physics.hpp"
#include "meshode/training.hpp"

namespace meshode {

// Flat `key = value` settings. Lines starting with '#' and text after an
// unquoted '#' are comments.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Typed lookups return the fallback when the key is absent and throw
  // ConfigError when it cannot be converted. Each lookup marks the key used.
  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  std::uint64_t get(const std::string& key, std::uint64_t fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::vector<int> get(const std::string& key, const std::vector<int>& fallback) const;

  // Throws ConfigError naming any key that no lookup consumed.
  void require_all_used() const;

 private:
  const std::string* find(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

// Shortest text that reads back to the same double.
std::string format_double(double x);

// Serialized case configuration, one `key = value` per line, starting with
// `case = rod|plate`. Round-trips bit-exactly.
std::string case_config_text(const CaseConfig& cfg);
CaseConfig case_config_from(const KeyValues& kv);
CaseConfig case_config_from(const KeyValues& kv, CaseKind kind);

std::string train_config_text(const TrainConfig& cfg);
// Starts from default_train_config(model, case) and applies the keys.
TrainConfig train_config_from(const KeyValues& kv);

}  // namespace meshode
