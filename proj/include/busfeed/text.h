#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace busfeed::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Full-string parse; rejects trailing garbage, NaN and infinities.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Shortest representation that parses back to the identical double.
std::string format_double(double x);
/// Shortest round-trip representation padded to at least `min_decimals`
/// fractional digits.
std::string format_fixed_min(double x, int min_decimals);

/// One CSV record. Handles double-quoted fields with embedded commas and
/// doubled quotes. A trailing '\r' is stripped.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);
std::string join_csv(const std::vector<std::string>& fields);

/// Reads every line of a CSV document; empty lines are skipped. The first
/// row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};
CsvTable parse_csv_table(std::string_view document);

/// Flat `key = value` lines; '#' starts a comment. Repeated keys accumulate.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view document);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;

  void set(const std::string& key, const std::string& value);
  const std::multimap<std::string, std::string>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::multimap<std::string, std::string> entries_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace busfeed::text
