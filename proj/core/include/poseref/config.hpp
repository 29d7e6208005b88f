#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace poseref {

// Line-oriented `key = value` settings file. '#' starts a comment, blank lines
// are ignored, duplicate keys are an error. Readers record which keys they
// consumed so callers can reject misspelled settings via unused().
class KvConfig {
 public:
  static KvConfig from_file(const std::filesystem::path& path);
  static KvConfig from_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list; surrounding whitespace per item is trimmed.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Keys present in the file that no getter has touched yet.
  std::vector<std::string> unused() const;
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> used_;
  std::string origin_;
};

}  // namespace poseref
