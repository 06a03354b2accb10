#include "busfeed/text.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace busfeed::text {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::string format_fixed_min(double x, int min_decimals) {
  std::string s = format_double(x);
  if (s.find_first_of("eE") != std::string::npos) {
    // Scientific form for tiny magnitudes; fall back to full fixed precision.
    char buf[400];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed);
    if (ec != std::errc{}) throw std::runtime_error("format_fixed_min failed");
    s.assign(buf, ptr);
  }
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s.push_back('.');
    dot = s.size() - 1;
  }
  const int decimals = static_cast<int>(s.size() - dot - 1);
  if (decimals < min_decimals) s.append(static_cast<std::size_t>(min_decimals - decimals), '0');
  return s;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_escape(fields[i]);
  }
  return out;
}

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

CsvTable parse_csv_table(std::string_view document) {
  // Strip a UTF-8 byte order mark.
  if (document.substr(0, 3) == "\xEF\xBB\xBF") document.remove_prefix(3);
  CsvTable table;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    auto end = document.find('\n', pos);
    if (end == std::string_view::npos) end = document.size();
    std::string_view line = document.substr(pos, end - pos);
    pos = end + 1;
    if (trim(line).empty()) {
      if (end == document.size()) break;
      continue;
    }
    auto fields = split_csv_line(line);
    if (!have_header) {
      for (auto& f : fields) f = std::string(trim(f));
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(std::move(fields));
    }
    if (end == document.size()) break;
  }
  return table;
}

KeyValueFile KeyValueFile::parse(std::string_view document) {
  KeyValueFile kv;
  std::istringstream in{std::string(document)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    kv.entries_.emplace(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) { return parse(read_file(path)); }

bool KeyValueFile::has(const std::string& key) const { return entries_.count(key) > 0; }

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto [lo, hi] = entries_.equal_range(key);
  if (lo == hi) return std::nullopt;
  return std::prev(hi)->second;  // last one wins
}

std::vector<std::string> KeyValueFile::get_all(const std::string& key) const {
  std::vector<std::string> out;
  auto [lo, hi] = entries_.equal_range(key);
  for (auto it = lo; it != hi; ++it) out.push_back(it->second);
  return out;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto d = parse_double(*v);
  if (!d) throw std::runtime_error("config key '" + key + "': not a number: " + *v);
  return *d;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto i = parse_int(*v);
  if (!i) throw std::runtime_error("config key '" + key + "': not an integer: " + *v);
  return *i;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  entries_.erase(key);
  entries_.emplace(key, value);
}

std::string KeyValueFile::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace busfeed::text
