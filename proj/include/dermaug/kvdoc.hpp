#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermaug {

/// Flat `dotted.key = value` document. `#` starts a comment line; blank
/// lines are ignored; keys are unique.
class KvDocument {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  /// Throws ParseError on a malformed line, ConfigError on a duplicate key.
  static KvDocument parse(std::string_view text);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::optional<std::string> get(std::string_view key) const;
  /// Throws ConfigError naming the key when absent.
  const std::string& require(std::string_view key) const;
  void set(std::string key, std::string value);
  std::string to_string() const;

 private:
  std::vector<Entry> entries_;
};

// Value codecs; failures throw ConfigError naming `key`.
double parse_double(std::string_view key, std::string_view value);
std::int64_t parse_int(std::string_view key, std::string_view value);
std::uint64_t parse_uint64(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key, std::string_view value);
std::vector<std::int64_t> parse_int_list(std::string_view key, std::string_view value);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace dermaug
