#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace mbgen {

// Flat "key = value" configuration; '#' starts a comment. Reads are tracked
// so a run can warn about keys it never used.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& def) const;
  std::string require_str(const std::string& key) const;
  std::int64_t integer(const std::string& key, std::int64_t def) const;
  std::uint64_t uinteger(const std::string& key, std::uint64_t def) const;
  double real(const std::string& key, double def) const;
  bool flag(const std::string& key, bool def) const;

  // keys present in the file but never read
  std::set<std::string> unused_keys() const;
  // canonical re-serialization (sorted keys), used for checkpoint echoes
  std::string echo() const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace mbgen
