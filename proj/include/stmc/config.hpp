#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text. `#` starts a comment; blank lines are ignored.
/// Values set later through set() (command-line flags) override the file.
class Config {
 public:
  struct Entry {
    std::string value;
    long line = 0;  // 0 for values that did not come from the file
  };

  static Config parse(std::istream& in, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws naming the first key of `keys` that is absent.
  void require(const std::vector<std::string>& keys) const;
  /// Throws naming the first key not in `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

  /// Sorted `key = value` lines.
  std::string echo() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;
  const Entry& entry(const std::string& key) const;

  std::string source_ = "<config>";
  std::map<std::string, Entry> entries_;
};

}  // namespace stmc
