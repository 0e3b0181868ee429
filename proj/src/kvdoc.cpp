#include "dermaug/kvdoc.hpp"

#include <charconv>
#include <cctype>
#include <cmath>

#include "dermaug/error.hpp"

namespace dermaug {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return true;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, const char* what) {
  const auto v = trim(value);
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(std::string(key), "expected " + std::string(what) + ", got '" + std::string(value) + "'");
  return out;
}

std::vector<std::string_view> split_list(std::string_view value) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    parts.push_back(trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

}  // namespace

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ParseError(line_no, "invalid key '" + std::string(key) + "'");
    if (doc.get(key)) throw ConfigError(std::string(key), "duplicate key (line " + std::to_string(line_no) + ")");
    doc.entries_.push_back({std::string(key), std::string(value), line_no});
  }
  return doc;
}

std::optional<std::string> KvDocument::get(std::string_view key) const {
  for (const auto& e : entries_)
    if (e.key == key) return e.value;
  return std::nullopt;
}

const std::string& KvDocument::require(std::string_view key) const {
  for (const auto& e : entries_)
    if (e.key == key) return e.value;
  throw ConfigError(std::string(key), "missing required key");
}

void KvDocument::set(std::string key, std::string value) {
  for (auto& e : entries_)
    if (e.key == key) {
      e.value = std::move(value);
      return;
    }
  entries_.push_back({std::move(key), std::move(value), 0});
}

std::string KvDocument::to_string() const {
  std::string out;
  for (const auto& e : entries_) out += e.key + " = " + e.value + "\n";
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const double v = parse_number<double>(key, value, "a number");
  if (!std::isfinite(v)) throw ConfigError(std::string(key), "must be finite");
  return v;
}

std::int64_t parse_int(std::string_view key, std::string_view value) {
  return parse_number<std::int64_t>(key, value, "an integer");
}

std::uint64_t parse_uint64(std::string_view key, std::string_view value) {
  return parse_number<std::uint64_t>(key, value, "a non-negative integer");
}

bool parse_bool(std::string_view key, std::string_view value) {
  const auto v = trim(value);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(value) + "'");
}

std::vector<double> parse_double_list(std::string_view key, std::string_view value) {
  std::vector<double> out;
  for (auto p : split_list(value)) out.push_back(parse_double(key, p));
  return out;
}

std::vector<std::int64_t> parse_int_list(std::string_view key, std::string_view value) {
  std::vector<std::int64_t> out;
  for (auto p : split_list(value)) out.push_back(parse_int(key, p));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace dermaug
