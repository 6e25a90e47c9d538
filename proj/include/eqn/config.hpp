#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "eqn/vec.hpp"

// Flat sectioned key=value run configuration.  Sections and keys are kept
// sorted, so serialize() is canonical and parse/serialize round-trips are
// exact.  Unknown keys are rejected against a schema before any compute.

namespace eqn {

class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  std::string serialize() const;
  std::uint64_t hash() const;

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);
  void erase(const std::string& section, const std::string& key);

  // Typed getters; missing keys raise ConfigError naming section.key.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double d) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int_or(const std::string& section, const std::string& key, long long d) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool d) const;
  Vec get_vec_or(const std::string& section, const std::string& key, Vec d) const;
  std::vector<int> get_ints_or(const std::string& section, const std::string& key,
                               std::vector<int> d) const;
  std::vector<std::string> get_words_or(const std::string& section, const std::string& key,
                                        std::vector<std::string> d) const;

  using Schema = std::map<std::string, std::set<std::string>>;
  // Throws ConfigError on sections or keys outside the schema.
  void validate_schema(const Schema& schema) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return data_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

}  // namespace eqn
