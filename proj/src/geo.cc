#include "busfeed/geo.h"

#include <cmath>

namespace busfeed::geo {

double distance_m(LatLon a, LatLon b) {
  const double mean_lat = deg_to_rad(0.5 * (a.lat + b.lat));
  const double x = deg_to_rad(b.lon - a.lon) * std::cos(mean_lat);
  const double y = deg_to_rad(b.lat - a.lat);
  return kEarthRadiusMeters * std::hypot(x, y);
}

double meters_to_lat_deg(double meters) {
  return meters / kEarthRadiusMeters * 180.0 / std::numbers::pi;
}

double meters_to_lon_deg(double meters, double at_lat) {
  return meters_to_lat_deg(meters) / std::cos(deg_to_rad(at_lat));
}

LatLon offset(LatLon origin, double north_m, double east_m) {
  return {origin.lat + meters_to_lat_deg(north_m),
          origin.lon + meters_to_lon_deg(east_m, origin.lat)};
}

}  // namespace busfeed::geo
