#include "parasink/config.hpp"

#include <charconv>
#include <fstream>

#include "parasink/errors.hpp"

namespace parasink {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigurationError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) throw ConfigurationError("line " + std::to_string(line_no) + ": empty key");
    config.values_[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open configuration file " + path.string());
  return parse(in);
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  if (auto v = get(key)) return *v;
  throw ValidationError(key + ": missing");
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key) const {
  const auto text = get_string(key);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(key + ": expected unsigned integer, got '" + text + "'");
  }
  return value;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const auto text = get_string(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected number, got '" + text + "'");
  }
}

std::size_t KeyValueConfig::list_size(const std::string& prefix) const {
  std::size_t n = 0;
  for (;; ++n) {
    const auto stem = prefix + "[" + std::to_string(n) + "]";
    auto it = values_.lower_bound(stem);
    if (it == values_.end() || it->first.compare(0, stem.size(), stem) != 0) return n;
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    auto item = trim(std::string_view(text).substr(start, end - start));
    if (!item.empty()) items.push_back(std::move(item));
    start = end + 1;
  }
  return items;
}

}  // namespace parasink
