#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "busfeed/domain.h"

namespace busfeed::gtfs {

struct Agency {
  std::string agency_id = "AMA";
  std::string agency_name = "Azienda Mobilità L'Aquila";
  std::string agency_url = "http://www.ama.laquila.it/";
  std::string agency_timezone = "Europe/Rome";

  bool operator==(const Agency&) const = default;
};

struct GtfsRoute {
  std::string route_id;
  std::string agency_id;
  std::string route_short_name;
  std::string route_long_name;
  int route_type = 3;  // bus

  bool operator==(const GtfsRoute&) const = default;
};

struct GtfsTrip {
  std::string trip_id;
  std::string route_id;
  std::string service_id;
  std::string trip_headsign;
  std::string block_id;

  bool operator==(const GtfsTrip&) const = default;
};

/// Times are seconds after midnight of the service day and may exceed 24 h.
struct StopTime {
  std::string trip_id;
  int arrival_time = 0;
  int departure_time = 0;
  std::string stop_id;
  int stop_sequence = 0;

  bool operator==(const StopTime&) const = default;
};

struct CalendarEntry {
  std::string service_id;
  std::array<bool, 7> days{};  // monday .. sunday
  std::string start_date;      // YYYYMMDD
  std::string end_date;

  bool operator==(const CalendarEntry&) const = default;
};

struct Feed {
  std::vector<Agency> agencies;
  std::vector<BusStop> stops;
  std::vector<GtfsRoute> routes;
  std::vector<GtfsTrip> trips;
  std::vector<StopTime> stop_times;
  std::vector<CalendarEntry> calendar;

  bool operator==(const Feed&) const = default;
};

/// Throws std::invalid_argument("nothing to export") on an empty graph.
Feed build_feed(const TransitGraph& graph, const Agency& agency = {});

/// "HH:MM:SS"; hours may exceed 23.
std::string format_time(int seconds);
std::optional<int> parse_time(std::string_view text);

struct FeedFile {
  std::string name;
  std::string contents;
};

/// The six feed files in fixed order with canonical headers and LF endings.
std::vector<FeedFile> serialize(const Feed& feed);
void write_feed(const Feed& feed, const std::string& directory);
/// Zip archive with the files at its root; byte-identical for identical feeds.
std::string package(const Feed& feed);

/// Reads a feed from a directory or a zip file. Unknown columns are ignored.
/// Throws std::runtime_error naming a missing file or column.
Feed parse_feed(const std::string& path);
Feed parse_feed_files(const std::vector<FeedFile>& files);

struct Finding {
  std::string rule;
  std::string location;
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;

  bool valid() const { return errors.empty(); }
  bool has_error(std::string_view rule) const;
  /// One finding per line: "<ERROR|WARNING> <rule> <location> <message>".
  std::string render() const;
};

ValidationReport validate(const Feed& feed);

}  // namespace busfeed::gtfs
