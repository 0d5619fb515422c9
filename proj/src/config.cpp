#include "mbgen/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mbgen {

namespace {
std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = val;
  }
  return cfg;
}

std::string Config::str(const std::string& key, const std::string& def) const {
  used_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

std::string Config::require_str(const std::string& key) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("config " + origin_ + ": missing required key '" + key + "'");
  return it->second;
}

std::int64_t Config::integer(const std::string& key, std::int64_t def) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config " + origin_ + ": key '" + key + "' is not an integer: " +
                             it->second);
  }
}

std::uint64_t Config::uinteger(const std::string& key, std::uint64_t def) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config " + origin_ + ": key '" + key +
                             "' is not an unsigned integer: " + it->second);
  }
}

double Config::real(const std::string& key, double def) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config " + origin_ + ": key '" + key + "' is not a number: " +
                             it->second);
  }
}

bool Config::flag(const std::string& key, bool def) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::runtime_error("config " + origin_ + ": key '" + key + "' is not a boolean: " + v);
}

std::set<std::string> Config::unused_keys() const {
  std::set<std::string> out;
  for (const auto& [k, v] : values_) {
    (void)v;
    if (!used_.count(k)) out.insert(k);
  }
  return out;
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace mbgen
