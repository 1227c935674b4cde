#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace parasink {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Keys may carry list indices, e.g. `schemas[3].mean_bytes = 2048`.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;

  /// Number of consecutive indices `prefix[0]`, `prefix[1]`, ... that have at least one key.
  std::size_t list_size(const std::string& prefix) const;

  /// Keys in lexical order.
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

 private:
  std::map<std::string, std::string> values_;
};

/// Splits a comma-separated list, trimming whitespace and dropping empty items.
std::vector<std::string> split_list(const std::string& text);

}  // namespace parasink
