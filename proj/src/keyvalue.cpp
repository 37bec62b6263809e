#include "fabnet/keyvalue.hpp"

#include "fabnet/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fabnet {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos)
    return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string_view::npos ? text.npos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size())
    throw ConfigError(std::string(what) + ": expected a number, got '" + t + "'");
  return value;
}

long long parse_int(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  long long value = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size())
    throw ConfigError(std::string(what) + ": expected an integer, got '" + t + "'");
  return value;
}

KeyValueDoc KeyValueDoc::parse(std::string_view text, const std::string& origin) {
  KeyValueDoc doc;
  doc.origin_ = origin;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#')
      continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (doc.contains(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    doc.entries_.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open config document " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void KeyValueDoc::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

bool KeyValueDoc::contains(std::string_view key) const {
  return get(key).has_value();
}

std::optional<std::string> KeyValueDoc::get(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key)
      return v;
  return std::nullopt;
}

const std::string& KeyValueDoc::require(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key)
      return v;
  throw ConfigError(origin_ + ": missing key '" + std::string(key) + "'");
}

void KeyValueDoc::reject_unknown(std::initializer_list<std::string_view> known) const {
  for (const auto& [k, v] : entries_) {
    bool ok = false;
    for (auto name : known)
      ok = ok || name == k;
    if (!ok)
      throw ConfigError(origin_ + ": unknown key '" + k + "'");
  }
}

std::string KeyValueDoc::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_)
    out += k + " = " + v + "\n";
  return out;
}

void KeyValueDoc::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot write config document " + path.string());
  out << to_text();
  if (!out)
    throw IoError("write failed for " + path.string());
}

} // namespace fabnet
