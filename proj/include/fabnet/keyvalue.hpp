#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fabnet {

/// Flat `key = value` document. Blank lines and lines starting with '#'
/// are ignored; key order is preserved and keys are unique.
class KeyValueDoc {
public:
  static KeyValueDoc parse(std::string_view text, const std::string& origin = "<text>");
  static KeyValueDoc load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  /// Throws ConfigError naming the origin if absent.
  const std::string& require(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept {
    return entries_;
  }
  const std::string& origin() const noexcept { return origin_; }

  /// Throws ConfigError on the first key not in `known`.
  void reject_unknown(std::initializer_list<std::string_view> known) const;

  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_ = "<text>";
};

/// Shortest text that parses back to the same double.
std::string format_double(double value);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::string trim(std::string_view text);

} // namespace fabnet
