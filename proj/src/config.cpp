#include "mt6/config.hpp"

#include <cerrno>
#include <cstdlib>

#include "mt6/error.hpp"
#include "mt6/io.hpp"

namespace mt6 {

namespace {

std::string Trim(std::string_view s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void CheckKey(const std::string& key) {
  if (key.empty()) Fail(ErrorKind::kInvalidArgument, "empty config key");
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.' || c == '-';
    if (!ok) Fail(ErrorKind::kInvalidArgument, "bad config key '" + key + "'");
  }
}

}  // namespace

RunConfig RunConfig::Parse(std::string_view text) {
  RunConfig cfg;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string line = Trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorKind::kFormat, "config line " + std::to_string(line_no) + " has no '='");
    }
    cfg.Set(Trim(std::string_view(line).substr(0, eq)), Trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::Load(const std::string& path) { return Parse(ReadFile(path)); }

void RunConfig::Set(const std::string& key, const std::string& value) {
  CheckKey(key);
  if (value.find('\n') != std::string::npos) {
    Fail(ErrorKind::kInvalidArgument, "value of '" + key + "' spans lines");
  }
  values_[key] = value;
}

void RunConfig::ApplyOverride(const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    Fail(ErrorKind::kInvalidArgument, "override '" + assignment + "' is not key=value");
  }
  Set(Trim(std::string_view(assignment).substr(0, eq)),
      Trim(std::string_view(assignment).substr(eq + 1)));
}

void RunConfig::Merge(const RunConfig& higher) {
  for (const auto& [k, v] : higher.values_) values_[k] = v;
}

std::optional<std::string> RunConfig::Find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::string& RunConfig::GetString(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) Fail(ErrorKind::kInvalidArgument, "missing config key '" + key + "'");
  return it->second;
}

int64_t RunConfig::GetInt(const std::string& key) const {
  const std::string& s = GetString(key);
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE) {
    Fail(ErrorKind::kInvalidArgument, "'" + key + "' must be an integer, got '" + s + "'");
  }
  return v;
}

uint64_t RunConfig::GetUint(const std::string& key) const {
  const int64_t v = GetInt(key);
  if (v < 0) Fail(ErrorKind::kInvalidArgument, "'" + key + "' must be non-negative");
  return static_cast<uint64_t>(v);
}

double RunConfig::GetDouble(const std::string& key) const {
  const std::string& s = GetString(key);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE) {
    Fail(ErrorKind::kInvalidArgument, "'" + key + "' must be a number, got '" + s + "'");
  }
  return v;
}

bool RunConfig::GetBool(const std::string& key) const {
  const std::string& s = GetString(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  Fail(ErrorKind::kInvalidArgument, "'" + key + "' must be true or false, got '" + s + "'");
}

std::vector<std::string> RunConfig::GetList(const std::string& key) const {
  std::vector<std::string> out;
  const std::string& s = GetString(key);
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    std::string item = Trim(std::string_view(s).substr(pos, end - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = end + 1;
  }
  return out;
}

std::vector<double> RunConfig::GetDoubleList(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : GetList(key)) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (*end != '\0') {
      Fail(ErrorKind::kInvalidArgument, "'" + key + "' has a non-numeric entry '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::Serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

RunConfig ResolveConfig(const RunConfig& user, const std::vector<KeySpec>& schema,
                        const std::string& command) {
  RunConfig out;
  for (const auto& k : schema) out.Set(k.name, k.default_value);
  for (const auto& [k, v] : user.values()) {
    if (!out.Has(k)) Fail(ErrorKind::kInvalidArgument, command + " does not accept key '" + k + "'");
    out.Set(k, v);
  }
  return out;
}

}  // namespace mt6
