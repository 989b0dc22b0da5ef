#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mt6 {

// Flat key=value settings. Later sources override earlier ones: command
// defaults, then the config file, then command-line overrides.
class RunConfig {
 public:
  // One "key = value" per line; blank lines and lines starting with '#' are
  // ignored. Repeated keys keep the last value.
  static RunConfig Parse(std::string_view text);
  static RunConfig Load(const std::string& path);

  void Set(const std::string& key, const std::string& value);
  // "key=value"
  void ApplyOverride(const std::string& assignment);
  void Merge(const RunConfig& higher);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> Find(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Typed accessors for keys that must be present.
  const std::string& GetString(const std::string& key) const;
  int64_t GetInt(const std::string& key) const;
  uint64_t GetUint(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  bool GetBool(const std::string& key) const;
  std::vector<std::string> GetList(const std::string& key) const;  // comma separated
  std::vector<double> GetDoubleList(const std::string& key) const;

  // Sorted "key=value" lines, parseable by Parse.
  std::string Serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};

// Fills defaults and rejects keys the schema does not know.
RunConfig ResolveConfig(const RunConfig& user, const std::vector<KeySpec>& schema,
                        const std::string& command);

}  // namespace mt6
