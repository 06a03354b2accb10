#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace busfeed {

/// Thrown when a value violates the invariants of its type.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Time-zone-naive local time, seconds since 1970-01-01 00:00:00.
struct Timestamp {
  std::int64_t seconds = 0;

  auto operator<=>(const Timestamp&) const = default;
};

/// Accepts "YYYY-MM-DD HH:MM:SS" and the "YYYY-MM-DD HH:MM.SS" variant seen in
/// tracker exports. Runs of whitespace between date and time are tolerated.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

/// Midnight of the calendar day containing `ts`.
Timestamp day_start(Timestamp ts);
/// 0 = Sunday ... 6 = Saturday.
int weekday(Timestamp ts);
/// "YYYYMMDD" of the calendar day containing `ts`.
std::string format_date_compact(Timestamp ts);

struct GpsRecord {
  double latitude = 0.0;
  double longitude = 0.0;
  double speed = 0.0;  // km/h
  std::string unit_id;
  Timestamp timestamp;

  /// Throws ValidationError if out of range.
  static GpsRecord make(double latitude, double longitude, double speed,
                        std::string unit_id, Timestamp timestamp);
  void validate() const;

  bool operator==(const GpsRecord&) const = default;
};

struct FeatureTuple {
  double lat = 0.0;
  double lon = 0.0;
  double sp = 0.0;

  void validate() const;
  bool operator==(const FeatureTuple&) const = default;
};

inline FeatureTuple to_tuple(const GpsRecord& r) {
  return {r.latitude, r.longitude, r.speed};
}

struct LabeledTuple {
  FeatureTuple tuple;
  int is_stop = 0;

  void validate() const;
  bool operator==(const LabeledTuple&) const = default;
};

/// k-1 feature tuples followed by one label, all from the same unit.
struct Block {
  std::vector<FeatureTuple> features;
  LabeledTuple label;
  std::string unit_id;
  Timestamp start_time;
  Timestamp end_time;

  bool operator==(const Block&) const = default;
};

enum class ScaleDirection { kForward, kInverse };

/// Per-feature min/max for min-max scaling to [0, 1].
struct ScalerParams {
  FeatureTuple min;
  FeatureTuple max;

  void validate() const;
  bool operator==(const ScalerParams&) const = default;
};

struct BusStop {
  std::string stop_id;
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
  int location_type = 0;
  std::optional<std::string> parent_station;

  void validate() const;
  bool operator==(const BusStop&) const = default;
};

struct StopPass {
  std::string stop_id;
  Timestamp time;

  bool operator==(const StopPass&) const = default;
};

struct Trip {
  std::string trip_id;
  std::string route_id;
  std::string unit_id;
  std::string service_id;
  std::vector<StopPass> stops;

  std::vector<std::string> stop_ids() const;
  /// At least two stops with strictly increasing pass times.
  void validate() const;
  bool operator==(const Trip&) const = default;
};

struct Route {
  std::string route_id;
  std::string short_name;
  std::string long_name;
  std::vector<std::string> stop_ids;
  std::vector<std::string> trip_ids;

  bool operator==(const Route&) const = default;
};

struct TransitGraph {
  std::vector<BusStop> stops;
  std::vector<Trip> trips;
  std::vector<Route> routes;

  /// Checks stop uniqueness, trip validity, and that every trip resolves to
  /// exactly one route whose stop sequence it follows.
  void validate() const;
  bool empty() const { return stops.empty() && trips.empty() && routes.empty(); }
};

}  // namespace busfeed
