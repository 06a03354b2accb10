#include "busfeed/gtfs.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "busfeed/text.h"
#include "busfeed/zip_archive.h"

namespace busfeed::gtfs {

namespace {

const std::array<const char*, 6> kFileOrder = {"agency.txt", "stops.txt",      "routes.txt",
                                               "trips.txt",  "stop_times.txt", "calendar.txt"};
const std::array<const char*, 7> kDayNames = {"monday", "tuesday",  "wednesday", "thursday",
                                              "friday", "saturday", "sunday"};

// Monday-based weekday index of a timestamp.
int monday_index(Timestamp ts) { return (weekday(ts) + 6) % 7; }

std::string coord(double x) { return text::format_fixed_min(x, 6); }

std::string csv_document(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::string out = text::join_csv(header) + "\n";
  for (const auto& r : rows) out += text::join_csv(r) + "\n";
  return out;
}

// Column lookup over one parsed file; errors carry the file name.
class Table {
 public:
  Table(std::string name, std::string_view document)
      : name_(std::move(name)), table_(text::parse_csv_table(document)) {}

  std::size_t rows() const { return table_.rows.size(); }

  std::size_t require(std::string_view column) const {
    auto c = table_.column(column);
    if (!c) throw std::runtime_error(name_ + ": missing column " + std::string(column));
    return *c;
  }
  std::optional<std::size_t> optional(std::string_view column) const { return table_.column(column); }

  std::string get(std::size_t row, std::size_t col) const {
    const auto& r = table_.rows[row];
    return col < r.size() ? r[col] : std::string();
  }
  std::string get(std::size_t row, std::optional<std::size_t> col) const {
    return col ? get(row, *col) : std::string();
  }

  double number(std::size_t row, std::size_t col) const {
    auto v = text::parse_double(get(row, col));
    if (!v) throw std::runtime_error(where(row) + ": expected a number in column " + table_.header[col]);
    return *v;
  }
  int integer(std::size_t row, std::size_t col) const {
    auto v = text::parse_int(get(row, col));
    if (!v) throw std::runtime_error(where(row) + ": expected an integer in column " + table_.header[col]);
    return static_cast<int>(*v);
  }
  int time(std::size_t row, std::size_t col) const {
    auto v = parse_time(get(row, col));
    if (!v) throw std::runtime_error(where(row) + ": expected HH:MM:SS in column " + table_.header[col]);
    return *v;
  }

  std::string where(std::size_t row) const { return name_ + ":" + std::to_string(row + 2); }

 private:
  std::string name_;
  text::CsvTable table_;
};

std::string location(const char* file, std::size_t index) {
  return std::string(file) + ":" + std::to_string(index + 2);
}

}  // namespace

std::string format_time(int seconds) {
  if (seconds < 0) throw std::invalid_argument("negative GTFS time");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02d:%02d:%02d", seconds / 3600, (seconds / 60) % 60, seconds % 60);
  return buf;
}

std::optional<int> parse_time(std::string_view s) {
  s = text::trim(s);
  const auto c1 = s.find(':');
  const auto c2 = s.rfind(':');
  if (c1 == std::string_view::npos || c1 == c2) return std::nullopt;
  auto h = text::parse_int(s.substr(0, c1));
  auto m = text::parse_int(s.substr(c1 + 1, c2 - c1 - 1));
  auto sec = text::parse_int(s.substr(c2 + 1));
  if (!h || !m || !sec || s.size() - c2 - 1 != 2 || c2 - c1 - 1 != 2) return std::nullopt;
  if (*h < 0 || *h > 999 || *m < 0 || *m > 59 || *sec < 0 || *sec > 59) return std::nullopt;
  return static_cast<int>(*h * 3600 + *m * 60 + *sec);
}

Feed build_feed(const TransitGraph& graph, const Agency& agency) {
  if (graph.empty() || graph.trips.empty()) throw std::invalid_argument("nothing to export");
  graph.validate();

  Feed feed;
  feed.agencies = {agency};
  feed.stops = graph.stops;

  std::unordered_map<std::string, std::string> stop_names;
  for (const auto& s : graph.stops) stop_names.emplace(s.stop_id, s.name);

  for (const auto& r : graph.routes) {
    feed.routes.push_back({r.route_id, agency.agency_id, r.short_name, r.long_name, 3});
  }

  struct ServiceSpan {
    Timestamp first, last;
    std::array<bool, 7> seen{};
  };
  std::map<std::string, ServiceSpan> services;
  for (const auto& t : graph.trips) {
    feed.trips.push_back({t.trip_id, t.route_id, t.service_id, stop_names.at(t.stops.back().stop_id), t.unit_id});
    const Timestamp midnight = day_start(t.stops.front().time);
    for (std::size_t i = 0; i < t.stops.size(); ++i) {
      const auto offset = static_cast<int>(t.stops[i].time.seconds - midnight.seconds);
      feed.stop_times.push_back({t.trip_id, offset, offset, t.stops[i].stop_id, static_cast<int>(i + 1)});
    }
    auto [it, inserted] = services.try_emplace(t.service_id, ServiceSpan{midnight, midnight, {}});
    it->second.first = std::min(it->second.first, midnight);
    it->second.last = std::max(it->second.last, midnight);
    it->second.seen[static_cast<std::size_t>(monday_index(midnight))] = true;
  }

  for (const auto& [id, span] : services) {
    CalendarEntry c;
    c.service_id = id;
    if (id == "Feriali") {
      c.days = {true, true, true, true, true, true, false};
    } else if (id == "Festivi") {
      c.days = {false, false, false, false, false, false, true};
    } else {
      c.days = span.seen;
    }
    c.start_date = format_date_compact(span.first);
    c.end_date = format_date_compact(span.last);
    feed.calendar.push_back(std::move(c));
  }
  return feed;
}

std::vector<FeedFile> serialize(const Feed& feed) {
  std::vector<FeedFile> files;
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& a : feed.agencies) {
      rows.push_back({a.agency_id, a.agency_name, a.agency_url, a.agency_timezone});
    }
    files.push_back({kFileOrder[0], csv_document({"agency_id", "agency_name", "agency_url", "agency_timezone"}, rows)});
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : feed.stops) {
      rows.push_back({s.stop_id, s.name, coord(s.latitude), coord(s.longitude),
                      std::to_string(s.location_type), s.parent_station.value_or("")});
    }
    files.push_back({kFileOrder[1], csv_document({"stop_id", "stop_name", "stop_lat", "stop_lon",
                                                  "location_type", "parent_station"},
                                                 rows)});
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : feed.routes) {
      rows.push_back({r.route_id, r.agency_id, r.route_short_name, r.route_long_name,
                      std::to_string(r.route_type)});
    }
    files.push_back({kFileOrder[2], csv_document({"route_id", "agency_id", "route_short_name",
                                                  "route_long_name", "route_type"},
                                                 rows)});
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& t : feed.trips) {
      rows.push_back({t.trip_id, t.route_id, t.service_id, t.trip_headsign, t.block_id});
    }
    files.push_back({kFileOrder[3], csv_document({"trip_id", "route_id", "service_id",
                                                  "trip_headsign", "block_id"},
                                                 rows)});
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& st : feed.stop_times) {
      rows.push_back({st.trip_id, format_time(st.arrival_time), format_time(st.departure_time),
                      st.stop_id, std::to_string(st.stop_sequence)});
    }
    files.push_back({kFileOrder[4], csv_document({"trip_id", "arrival_time", "departure_time",
                                                  "stop_id", "stop_sequence"},
                                                 rows)});
  }
  {
    std::vector<std::string> header = {"service_id"};
    header.insert(header.end(), kDayNames.begin(), kDayNames.end());
    header.push_back("start_date");
    header.push_back("end_date");
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : feed.calendar) {
      std::vector<std::string> row = {c.service_id};
      for (bool d : c.days) row.push_back(d ? "1" : "0");
      row.push_back(c.start_date);
      row.push_back(c.end_date);
      rows.push_back(std::move(row));
    }
    files.push_back({kFileOrder[5], csv_document(header, rows)});
  }
  return files;
}

void write_feed(const Feed& feed, const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw std::runtime_error("cannot create " + directory + ": " + ec.message());
  for (const auto& f : serialize(feed)) {
    text::write_file((std::filesystem::path(directory) / f.name).string(), f.contents);
  }
}

std::string package(const Feed& feed) {
  std::vector<zip::Entry> entries;
  for (auto& f : serialize(feed)) entries.push_back({std::move(f.name), std::move(f.contents)});
  return zip::write_archive(entries);
}

Feed parse_feed_files(const std::vector<FeedFile>& files) {
  auto find = [&](const char* name) -> const std::string& {
    for (const auto& f : files) {
      if (f.name == name) return f.contents;
    }
    throw std::runtime_error(std::string("GTFS feed is missing ") + name);
  };
  Feed feed;
  {
    Table t("agency.txt", find("agency.txt"));
    const auto id = t.optional("agency_id");
    const auto name = t.require("agency_name"), url = t.require("agency_url"),
               tz = t.require("agency_timezone");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      feed.agencies.push_back({t.get(r, id), t.get(r, name), t.get(r, url), t.get(r, tz)});
    }
  }
  {
    Table t("stops.txt", find("stops.txt"));
    const auto id = t.require("stop_id"), lat = t.require("stop_lat"), lon = t.require("stop_lon");
    const auto name = t.optional("stop_name"), type = t.optional("location_type"),
               parent = t.optional("parent_station");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      BusStop s;
      s.stop_id = t.get(r, id);
      s.name = t.get(r, name);
      s.latitude = t.number(r, lat);
      s.longitude = t.number(r, lon);
      s.location_type = type && !t.get(r, type).empty() ? t.integer(r, *type) : 0;
      if (auto p = t.get(r, parent); !p.empty()) s.parent_station = p;
      feed.stops.push_back(std::move(s));
    }
  }
  {
    Table t("routes.txt", find("routes.txt"));
    const auto id = t.require("route_id"), type = t.require("route_type");
    const auto agency = t.optional("agency_id"), short_name = t.optional("route_short_name"),
               long_name = t.optional("route_long_name");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      feed.routes.push_back({t.get(r, id), t.get(r, agency), t.get(r, short_name),
                             t.get(r, long_name), t.integer(r, type)});
    }
  }
  {
    Table t("trips.txt", find("trips.txt"));
    const auto id = t.require("trip_id"), route = t.require("route_id"), service = t.require("service_id");
    const auto headsign = t.optional("trip_headsign"), block = t.optional("block_id");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      feed.trips.push_back({t.get(r, id), t.get(r, route), t.get(r, service), t.get(r, headsign),
                            t.get(r, block)});
    }
  }
  {
    Table t("stop_times.txt", find("stop_times.txt"));
    const auto trip = t.require("trip_id"), arr = t.require("arrival_time"),
               dep = t.require("departure_time"), stop = t.require("stop_id"),
               seq = t.require("stop_sequence");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      feed.stop_times.push_back({t.get(r, trip), t.time(r, arr), t.time(r, dep), t.get(r, stop),
                                 t.integer(r, seq)});
    }
  }
  {
    Table t("calendar.txt", find("calendar.txt"));
    const auto id = t.require("service_id"), start = t.require("start_date"), end = t.require("end_date");
    std::array<std::size_t, 7> day_cols{};
    for (std::size_t d = 0; d < 7; ++d) day_cols[d] = t.require(kDayNames[d]);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      CalendarEntry c;
      c.service_id = t.get(r, id);
      for (std::size_t d = 0; d < 7; ++d) c.days[d] = t.integer(r, day_cols[d]) != 0;
      c.start_date = t.get(r, start);
      c.end_date = t.get(r, end);
      feed.calendar.push_back(std::move(c));
    }
  }
  return feed;
}

Feed parse_feed(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<FeedFile> files;
  if (fs::is_directory(path)) {
    for (const char* name : kFileOrder) {
      const auto p = fs::path(path) / name;
      if (fs::exists(p)) files.push_back({name, text::read_file(p.string())});
    }
  } else {
    for (auto& e : zip::read_archive(text::read_file(path))) {
      files.push_back({std::move(e.name), std::move(e.data)});
    }
  }
  return parse_feed_files(files);
}

bool ValidationReport::has_error(std::string_view rule) const {
  return std::any_of(errors.begin(), errors.end(), [&](const Finding& f) { return f.rule == rule; });
}

std::string ValidationReport::render() const {
  std::string out;
  for (const auto& f : errors) out += "ERROR " + f.rule + " " + f.location + " " + f.message + "\n";
  for (const auto& f : warnings) out += "WARNING " + f.rule + " " + f.location + " " + f.message + "\n";
  out += "errors=" + std::to_string(errors.size()) + " warnings=" + std::to_string(warnings.size()) + "\n";
  return out;
}

ValidationReport validate(const Feed& feed) {
  ValidationReport report;
  auto error = [&](std::string rule, std::string where, std::string message) {
    report.errors.push_back({std::move(rule), std::move(where), std::move(message)});
  };
  auto warn = [&](std::string rule, std::string where, std::string message) {
    report.warnings.push_back({std::move(rule), std::move(where), std::move(message)});
  };

  // Primary keys.
  auto unique_ids = [&](const char* file, const auto& rows, auto key) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string k = key(rows[i]);
      if (!seen.insert(k).second) error("DUPLICATE_KEY", location(file, i), "duplicate id '" + k + "'");
    }
    return seen;
  };
  const auto agencies = unique_ids("agency.txt", feed.agencies, [](const Agency& a) { return a.agency_id; });
  const auto stops = unique_ids("stops.txt", feed.stops, [](const BusStop& s) { return s.stop_id; });
  const auto routes = unique_ids("routes.txt", feed.routes, [](const GtfsRoute& r) { return r.route_id; });
  const auto trips = unique_ids("trips.txt", feed.trips, [](const GtfsTrip& t) { return t.trip_id; });
  const auto services =
      unique_ids("calendar.txt", feed.calendar, [](const CalendarEntry& c) { return c.service_id; });
  unique_ids("stop_times.txt", feed.stop_times,
             [](const StopTime& st) { return st.trip_id + "#" + std::to_string(st.stop_sequence); });

  if (feed.agencies.empty()) error("FK_AGENCY", "agency.txt", "no agency defined");
  if (feed.routes.empty()) error("NO_ROUTES", "routes.txt", "no routes");

  for (std::size_t i = 0; i < feed.stops.size(); ++i) {
    const auto& s = feed.stops[i];
    if (!(s.latitude >= -90.0 && s.latitude <= 90.0) || !(s.longitude >= -180.0 && s.longitude <= 180.0)) {
      error("COORD_RANGE", location("stops.txt", i), "coordinates out of range for '" + s.stop_id + "'");
    }
    if (s.parent_station && !stops.count(*s.parent_station)) {
      error("FK_STOP", location("stops.txt", i), "unknown parent_station '" + *s.parent_station + "'");
    }
  }

  for (std::size_t i = 0; i < feed.routes.size(); ++i) {
    const auto& r = feed.routes[i];
    const bool implicit_ok = r.agency_id.empty() && feed.agencies.size() == 1;
    if (!implicit_ok && !agencies.count(r.agency_id)) {
      error("FK_AGENCY", location("routes.txt", i), "unknown agency '" + r.agency_id + "'");
    }
  }

  std::unordered_map<std::string, std::size_t> trips_per_route;
  for (std::size_t i = 0; i < feed.trips.size(); ++i) {
    const auto& t = feed.trips[i];
    if (!routes.count(t.route_id)) {
      error("FK_ROUTE", location("trips.txt", i), "unknown route '" + t.route_id + "'");
    }
    if (!services.count(t.service_id)) {
      error("FK_SERVICE", location("trips.txt", i), "unknown service '" + t.service_id + "'");
    }
    ++trips_per_route[t.route_id];
  }
  for (std::size_t i = 0; i < feed.routes.size(); ++i) {
    if (!trips_per_route.count(feed.routes[i].route_id)) {
      error("ROUTE_NO_TRIPS", location("routes.txt", i), "route has no trips");
    }
  }

  std::map<std::string, std::vector<std::size_t>> per_trip;
  std::unordered_set<std::string> used_stops;
  for (std::size_t i = 0; i < feed.stop_times.size(); ++i) {
    const auto& st = feed.stop_times[i];
    if (!trips.count(st.trip_id)) {
      error("FK_TRIP", location("stop_times.txt", i), "unknown trip '" + st.trip_id + "'");
    }
    if (!stops.count(st.stop_id)) {
      error("FK_STOP", location("stop_times.txt", i), "unknown stop '" + st.stop_id + "'");
    }
    if (st.arrival_time > st.departure_time) {
      error("TIME_ORDER", location("stop_times.txt", i), "arrival after departure");
    }
    used_stops.insert(st.stop_id);
    per_trip[st.trip_id].push_back(i);
  }
  for (std::size_t i = 0; i < feed.trips.size(); ++i) {
    auto it = per_trip.find(feed.trips[i].trip_id);
    const std::size_t n = it == per_trip.end() ? 0 : it->second.size();
    if (n < 2) {
      error("TRIP_TOO_FEW_STOPS", location("trips.txt", i),
            "trip '" + feed.trips[i].trip_id + "' has " + std::to_string(n) + " stop_times");
    }
  }
  for (const auto& [trip, rows] : per_trip) {
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const auto& prev = feed.stop_times[rows[k - 1]];
      const auto& cur = feed.stop_times[rows[k]];
      if (cur.stop_sequence <= prev.stop_sequence) {
        error("STOP_SEQUENCE_ORDER", location("stop_times.txt", rows[k]),
              "stop_sequence does not increase in trip '" + trip + "'");
      } else if (cur.arrival_time < prev.departure_time) {
        error("TIME_ORDER", location("stop_times.txt", rows[k]),
              "time goes backwards in trip '" + trip + "'");
      }
    }
  }

  for (std::size_t i = 0; i < feed.calendar.size(); ++i) {
    const auto& c = feed.calendar[i];
    if (c.start_date.size() != 8 || c.end_date.size() != 8 || c.end_date < c.start_date) {
      error("CALENDAR_RANGE", location("calendar.txt", i), "bad date range for '" + c.service_id + "'");
    }
  }
  for (std::size_t i = 0; i < feed.stops.size(); ++i) {
    if (!used_stops.count(feed.stops[i].stop_id)) {
      warn("UNUSED_STOP", location("stops.txt", i), "stop '" + feed.stops[i].stop_id + "' is never served");
    }
  }
  return report;
}

}  // namespace busfeed::gtfs
