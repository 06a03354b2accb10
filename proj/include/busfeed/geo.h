#pragma once

#include <numbers>

namespace busfeed::geo {

inline constexpr double kEarthRadiusMeters = 6371000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const LatLon&) const = default;
};

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Equirectangular approximation; accurate to well under a meter at city scale.
double distance_m(LatLon a, LatLon b);

/// Degrees of latitude spanned by `meters` northwards.
double meters_to_lat_deg(double meters);
/// Degrees of longitude spanned by `meters` eastwards at latitude `at_lat`.
double meters_to_lon_deg(double meters, double at_lat);

/// Point displaced by (north, east) meters.
LatLon offset(LatLon origin, double north_m, double east_m);

}  // namespace busfeed::geo
