#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "busfeed/domain.h"
#include "busfeed/geo.h"

namespace busfeed::graph {

struct StopCluster {
  std::string stop_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::size_t members = 0;
  /// Input positions of the member points.
  std::vector<std::size_t> member_indices;

  geo::LatLon centroid() const { return {latitude, longitude}; }
};

/// Greedy clustering in input order. A point joins the first cluster whose
/// centroid lies within `radius_m`, provided the updated centroid stays within
/// `radius_m` of every member; otherwise it seeds a new cluster. Clusters with
/// fewer than `min_cluster_size` members are dropped; survivors are numbered
/// S1, S2, ... by first appearance. Throws std::invalid_argument if radius <= 0.
std::vector<StopCluster> cluster_stops(std::span<const geo::LatLon> points, double radius_m,
                                       std::size_t min_cluster_size);

/// BusStops named "Fermata N" after their cluster ordinal.
std::vector<BusStop> to_bus_stops(std::span<const StopCluster> clusters);

struct SegmentationOptions {
  double stop_radius_m = 25.0;
  double dwell_speed_kmh = 3.0;
  double dwell_threshold_s = 60.0;
  std::int64_t max_gap_s = 120;
  /// When non-empty, only dwells at these stop ids cut a trip.
  std::vector<std::string> terminal_stops;
  /// Drop segments that do not begin and end with a dwell cut (the ragged
  /// ends of a trace and the pieces around a reporting gap).
  bool drop_partial = false;
};

/// Records must be sorted by (unit_id, timestamp). Returned trips carry unit,
/// stop passes and service label; trip and route ids are left empty. A trip
/// starts at the departure from its first stop and records entry times for
/// every later stop. A loop yields its terminal at both ends.
std::vector<Trip> segment_trips(std::span<const GpsRecord> trace, std::span<const StopCluster> stops,
                                const SegmentationOptions& options = {});

/// "Festivi" on Sundays, "Feriali" otherwise.
std::string service_label(Timestamp ts);

/// Groups trips with identical stop sequences into routes L1, L2, ... by first
/// appearance, and names trips <route><SERVICE><n>. Fills trip.route_id and
/// trip.trip_id in place.
std::vector<Route> group_routes(std::vector<Trip>& trips, std::span<const BusStop> stops);

}  // namespace busfeed::graph
