#include "eqn/config.hpp"

#include <fstream>
#include <sstream>

#include "eqn/errors.hpp"
#include "eqn/trace.hpp"

namespace eqn {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("unterminated section header at line " + std::to_string(lineno),
                          "", lineno);
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError("empty section name at line " + std::to_string(lineno), "", lineno);
      c.data_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + std::to_string(lineno), "", lineno);
    if (section.empty())
      throw ConfigError("key outside any section at line " + std::to_string(lineno), "", lineno);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty key at line " + std::to_string(lineno), "", lineno);
    if (c.data_[section].count(key))
      throw ConfigError("duplicate key '" + section + "." + key + "' at line " +
                            std::to_string(lineno),
                        key, lineno);
    c.data_[section][key] = value;
  }
  return c;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str());
}

std::string Config::serialize() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, kv] : data_) {
    if (!first) os << "\n";
    first = false;
    os << "[" << section << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  }
  return os.str();
}

std::uint64_t Config::hash() const { return fnv1a(serialize()); }

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  return s != data_.end() && s->second.count(key) > 0;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  data_[section][key] = value;
}

void Config::erase(const std::string& section, const std::string& key) {
  const auto s = data_.find(section);
  if (s != data_.end()) s->second.erase(key);
}

std::string Config::get(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  if (s == data_.end() || !s->second.count(key))
    throw ConfigError("missing required key '" + section + "." + key + "'",
                      section + "." + key);
  return s->second.at(key);
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t pos;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + section + "." + key + "' is not a number: " + v,
                      section + "." + key);
  }
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double d) const {
  return has(section, key) ? get_double(section, key) : d;
}

long long Config::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t pos;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + section + "." + key + "' is not an integer: " + v,
                      section + "." + key);
  }
}

long long Config::get_int_or(const std::string& section, const std::string& key,
                             long long d) const {
  return has(section, key) ? get_int(section, key) : d;
}

bool Config::get_bool_or(const std::string& section, const std::string& key, bool d) const {
  if (!has(section, key)) return d;
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + section + "." + key + "' is not a boolean: " + v,
                    section + "." + key);
}

Vec Config::get_vec_or(const std::string& section, const std::string& key, Vec d) const {
  if (!has(section, key)) return d;
  std::istringstream is(get(section, key));
  Vec out;
  double v;
  while (is >> v) out.push_back(v);
  if (!is.eof())
    throw ConfigError("key '" + section + "." + key + "' is not a number list",
                      section + "." + key);
  return out;
}

std::vector<int> Config::get_ints_or(const std::string& section, const std::string& key,
                                     std::vector<int> d) const {
  if (!has(section, key)) return d;
  std::istringstream is(get(section, key));
  std::vector<int> out;
  long long v;
  while (is >> v) out.push_back(int(v));
  if (!is.eof())
    throw ConfigError("key '" + section + "." + key + "' is not an integer list",
                      section + "." + key);
  return out;
}

std::vector<std::string> Config::get_words_or(const std::string& section,
                                              const std::string& key,
                                              std::vector<std::string> d) const {
  if (!has(section, key)) return d;
  std::istringstream is(get(section, key));
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

void Config::validate_schema(const Schema& schema) const {
  for (const auto& [section, kv] : data_) {
    const auto s = schema.find(section);
    if (s == schema.end())
      throw ConfigError("unknown config section [" + section + "]", section);
    for (const auto& [k, v] : kv)
      if (!s->second.count(k))
        throw ConfigError("unknown key '" + section + "." + k + "'", section + "." + k);
  }
}

}  // namespace eqn
