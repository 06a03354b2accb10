#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "busfeed/domain.h"
#include "busfeed/geo.h"
#include "busfeed/text.h"

namespace busfeed::sim {

/// A scripted line. A closed polyline (first waypoint equal to the last) is
/// driven as a loop; an open one is driven back and forth. Terminals must be
/// stops; buses lay over there between trips.
struct RouteScript {
  std::string name;
  std::vector<geo::LatLon> waypoints;
  std::vector<std::size_t> stop_indices;
  std::vector<std::string> stop_names;  // parallel to stop_indices; may be empty
  double speed_kmh = 25.0;
  double dwell_s = 20.0;
  double layover_s = 300.0;

  bool is_loop() const;
  void validate() const;

  /// CSV with columns `lat,lon,is_stop` and an optional `name`.
  static RouteScript from_csv(std::string_view document, std::string name);
};

struct SimConfig {
  std::vector<RouteScript> routes;
  /// One entry per route, or a single entry applied to every route.
  std::vector<int> buses_per_route = {1};
  double duration_hours = 1.0;
  int report_interval_s = 10;
  double gps_noise_sigma_m = 5.0;
  double zero_speed_glitch_rate = 0.0;
  double duplicate_rate = 0.0;
  /// Each bus drives at nominal speed times a factor in [1 - j, 1 + j].
  double speed_jitter = 0.1;
  Timestamp start = *parse_timestamp("2019-12-07 05:00:00");
  std::uint64_t seed = 1;

  int buses_on(std::size_t route_index) const;
  void validate() const;

  /// Reads `sim.*` keys (and `seed`); route CSV paths are resolved against
  /// `base_dir`.
  static SimConfig from_key_values(const text::KeyValueFile& kv, const std::string& base_dir);
};

enum class RecordKind { kClean, kDuplicate, kZeroSpeedGlitch };

struct GroundTruth {
  std::vector<BusStop> stops;
  /// Complete trips only (terminal to terminal, inside the simulated window).
  std::vector<Trip> trips;
  std::vector<Route> routes;
  /// Parallel to the emitted records.
  std::vector<RecordKind> kinds;
  /// Parallel to the emitted records: true while the bus stands at a stop.
  std::vector<bool> at_stop;
};

struct SimResult {
  std::vector<GpsRecord> records;
  GroundTruth truth;
};

/// Records come out ordered by (unit_id, timestamp); injected duplicates
/// directly follow their original.
SimResult simulate(const SimConfig& cfg);

std::string write_stops_csv(const std::vector<BusStop>& stops);
std::vector<BusStop> read_stops_csv(std::string_view document);
std::string write_trips_csv(const std::vector<Trip>& trips);

}  // namespace busfeed::sim
