#include "busfeed/transit_graph.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_map>

namespace busfeed::graph {

namespace {

struct Accumulator {
  double sum_lat = 0.0;
  double sum_lon = 0.0;
  std::vector<geo::LatLon> members;
  std::vector<std::size_t> indices;

  geo::LatLon centroid() const {
    const auto n = static_cast<double>(members.size());
    return {sum_lat / n, sum_lon / n};
  }
};

bool fits(const Accumulator& c, geo::LatLon p, double radius_m) {
  const auto n = static_cast<double>(c.members.size() + 1);
  const geo::LatLon next{(c.sum_lat + p.lat) / n, (c.sum_lon + p.lon) / n};
  if (geo::distance_m(next, p) > radius_m) return false;
  return std::all_of(c.members.begin(), c.members.end(),
                     [&](geo::LatLon m) { return geo::distance_m(next, m) <= radius_m; });
}

std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

// Index of the nearest stop within radius, or -1.
int stop_at(geo::LatLon p, std::span<const StopCluster> stops, double radius_m) {
  int best = -1;
  double best_d = radius_m;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const double d = geo::distance_m(p, stops[i].centroid());
    if (d <= best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

std::vector<StopCluster> cluster_stops(std::span<const geo::LatLon> points, double radius_m,
                                       std::size_t min_cluster_size) {
  if (!(radius_m > 0.0)) throw std::invalid_argument("cluster radius must be positive");
  std::vector<Accumulator> acc;
  for (std::size_t idx = 0; idx < points.size(); ++idx) {
    const auto p = points[idx];
    bool placed = false;
    for (auto& c : acc) {
      if (geo::distance_m(c.centroid(), p) <= radius_m && fits(c, p, radius_m)) {
        c.sum_lat += p.lat;
        c.sum_lon += p.lon;
        c.members.push_back(p);
        c.indices.push_back(idx);
        placed = true;
        break;
      }
    }
    if (!placed) acc.push_back({p.lat, p.lon, {p}, {idx}});
  }
  std::vector<StopCluster> out;
  for (const auto& c : acc) {
    if (c.members.size() < min_cluster_size) continue;
    const auto centroid = c.centroid();
    out.push_back({"S" + std::to_string(out.size() + 1), centroid.lat, centroid.lon, c.members.size(),
                   c.indices});
  }
  return out;
}

std::vector<BusStop> to_bus_stops(std::span<const StopCluster> clusters) {
  std::vector<BusStop> out;
  out.reserve(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    BusStop s;
    s.stop_id = clusters[i].stop_id;
    s.name = "Fermata " + std::to_string(i + 1);
    s.latitude = clusters[i].latitude;
    s.longitude = clusters[i].longitude;
    out.push_back(std::move(s));
  }
  return out;
}

std::string service_label(Timestamp ts) { return weekday(ts) == 0 ? "Festivi" : "Feriali"; }

std::vector<Trip> segment_trips(std::span<const GpsRecord> trace, std::span<const StopCluster> stops,
                                const SegmentationOptions& options) {
  std::vector<Trip> trips;
  std::vector<bool> terminal(stops.size(), options.terminal_stops.empty());
  for (std::size_t i = 0; i < stops.size(); ++i) {
    if (std::find(options.terminal_stops.begin(), options.terminal_stops.end(), stops[i].stop_id) !=
        options.terminal_stops.end()) {
      terminal[i] = true;
    }
  }

  std::size_t begin = 0;
  while (begin < trace.size()) {
    std::size_t end = begin;
    while (end < trace.size() && trace[end].unit_id == trace[begin].unit_id) ++end;
    const auto unit = trace.subspan(begin, end - begin);
    begin = end;

    std::vector<int> at(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) {
      at[i] = stop_at({unit[i].latitude, unit[i].longitude}, stops, options.stop_radius_m);
    }

    // A segment is [first, last] over record indices; `cut_start` / `cut_end`
    // say whether a dwell bounds it.
    struct Segment {
      std::size_t first, last;
      bool cut_start, cut_end;
    };
    std::vector<Segment> segments;
    std::size_t seg_first = 0;
    bool seg_cut = false;
    std::size_t i = 0;
    while (i < unit.size()) {
      if (i > 0 && unit[i].timestamp.seconds - unit[i - 1].timestamp.seconds > options.max_gap_s) {
        segments.push_back({seg_first, i - 1, seg_cut, false});
        seg_first = i;
        seg_cut = false;
      }
      const bool dwelling = at[i] >= 0 && unit[i].speed < options.dwell_speed_kmh;
      if (!dwelling) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < unit.size() && at[j + 1] == at[i] && unit[j + 1].speed < options.dwell_speed_kmh &&
             unit[j + 1].timestamp.seconds - unit[j].timestamp.seconds <= options.max_gap_s) {
        ++j;
      }
      const double dwell = static_cast<double>(unit[j].timestamp.seconds - unit[i].timestamp.seconds);
      if (dwell >= options.dwell_threshold_s && terminal[static_cast<std::size_t>(at[i])]) {
        segments.push_back({seg_first, i, seg_cut, true});
        seg_first = j;
        seg_cut = true;
      }
      i = j + 1;
    }
    if (!unit.empty()) segments.push_back({seg_first, unit.size() - 1, seg_cut, false});

    for (const auto& seg : segments) {
      if (options.drop_partial && !(seg.cut_start && seg.cut_end)) continue;
      Trip trip;
      trip.unit_id = unit[seg.first].unit_id;
      for (std::size_t r = seg.first; r <= seg.last; ++r) {
        if (at[r] < 0) continue;
        const auto& id = stops[static_cast<std::size_t>(at[r])].stop_id;
        if (!trip.stops.empty() && trip.stops.back().stop_id == id) continue;
        trip.stops.push_back({id, unit[r].timestamp});
      }
      if (trip.stops.size() < 2) continue;
      trip.service_id = service_label(trip.stops.front().time);
      trips.push_back(std::move(trip));
    }
  }
  return trips;
}

std::vector<Route> group_routes(std::vector<Trip>& trips, std::span<const BusStop> stops) {
  std::unordered_map<std::string, const BusStop*> by_id;
  for (const auto& s : stops) by_id.emplace(s.stop_id, &s);
  auto name_of = [&](const std::string& id) {
    auto it = by_id.find(id);
    return it == by_id.end() ? id : it->second->name;
  };

  std::vector<Route> routes;
  std::map<std::vector<std::string>, std::size_t> index;
  std::map<std::pair<std::size_t, std::string>, int> ordinal;
  for (auto& trip : trips) {
    auto ids = trip.stop_ids();
    auto [it, inserted] = index.emplace(ids, routes.size());
    if (inserted) {
      Route r;
      r.route_id = "L" + std::to_string(routes.size() + 1);
      r.short_name = std::to_string(routes.size() + 1);
      r.long_name = name_of(ids.front()) + " - " + name_of(ids.back());
      r.stop_ids = ids;
      routes.push_back(std::move(r));
    }
    auto& route = routes[it->second];
    const int n = ++ordinal[{it->second, trip.service_id}];
    trip.route_id = route.route_id;
    trip.trip_id = route.route_id + upper(trip.service_id) + std::to_string(n);
    route.trip_ids.push_back(trip.trip_id);
  }
  return routes;
}

}  // namespace busfeed::graph
