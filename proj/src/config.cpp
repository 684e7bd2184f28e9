#include "stmc/config.hpp"

#include "csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace stmc {

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  c.source_ = source;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = csv::trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(csv::trim(text.substr(0, eq)));
    const std::string value(csv::trim(text.substr(eq + 1)));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (c.entries_.count(key))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "' (first set on line " +
                        std::to_string(c.entries_[key].line) + ")");
    c.entries_[key] = {value, line_no};
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

const Config::Entry& Config::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
  return it->second;
}

void Config::bad_value(const std::string& key, const std::string& expected) const {
  const auto& e = entry(key);
  const std::string where = e.line > 0 ? source_ + ":" + std::to_string(e.line) : "command line";
  throw ConfigError(where + ": key '" + key + "' expects " + expected + ", got '" + e.value + "'");
}

std::string Config::get_string(const std::string& key) const { return entry(key).value; }

double Config::get_double(const std::string& key) const {
  const auto v = csv::to_double(entry(key).value);
  if (!v) bad_value(key, "a number");
  return *v;
}

long Config::get_int(const std::string& key) const {
  const auto v = csv::to_long(entry(key).value);
  if (!v) bad_value(key, "an integer");
  return *v;
}

bool Config::get_bool(const std::string& key) const {
  std::string v = entry(key).value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, "a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  for (auto& item : csv::split(entry(key).value))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}
double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
long Config::get_int(const std::string& key, long fallback) const { return has(key) ? get_int(key) : fallback; }
bool Config::get_bool(const std::string& key, bool fallback) const { return has(key) ? get_bool(key) : fallback; }

void Config::require(const std::vector<std::string>& keys) const {
  for (const auto& k : keys) entry(k);
}

void Config::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, e] : entries_)
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      const std::string where = e.line > 0 ? source_ + ":" + std::to_string(e.line) : "command line";
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

std::string Config::echo() const {
  std::ostringstream out;
  for (const auto& [key, e] : entries_) out << key << " = " << e.value << '\n';
  return out.str();
}

}  // namespace stmc
