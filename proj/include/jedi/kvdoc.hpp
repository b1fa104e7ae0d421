#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jedi {

// Human-readable `key = value` document. Keys are dotted paths, `#` starts a
// comment line, and key order is preserved for writing.
class KvDoc {
 public:
  static KvDoc parse(const std::string& text, const std::string& origin = "<string>");
  static KvDoc load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  bool has(const std::string& key) const { return index_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key);
  // Applies a `key=value` override.
  void apply_override(const std::string& assignment);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;

  std::string require(const std::string& key) const;
  std::vector<std::string> keys() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::string format_double(double v);

}  // namespace jedi
