#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace busfeed::zip {

struct Entry {
  std::string name;
  std::string data;

  bool operator==(const Entry&) const = default;
};

/// Deflate-compressed archive with entries in the given order and a fixed
/// 1980-01-01 00:00 timestamp, so identical input yields identical bytes.
std::string write_archive(std::span<const Entry> entries);

/// Reads stored and deflated entries. Throws std::runtime_error on malformed
/// archives or CRC mismatches.
std::vector<Entry> read_archive(std::string_view bytes);

}  // namespace busfeed::zip
