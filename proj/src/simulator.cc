#include "busfeed/simulator.h"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace busfeed::sim {

namespace {

enum class PhaseKind { kMove, kDwell, kLayover };

struct Phase {
  PhaseKind kind = PhaseKind::kMove;
  double start = 0.0;  // seconds since the start of the cycle
  double duration = 0.0;
  geo::LatLon from;
  geo::LatLon to;
  int stop = -1;  // global stop index for dwell and layover phases
};

struct Schedule {
  std::vector<Phase> phases;
  double cycle = 0.0;

  const Phase& at(double tau) const {
    auto it = std::upper_bound(phases.begin(), phases.end(), tau,
                               [](double t, const Phase& p) { return t < p.start; });
    return *std::prev(it);
  }
};

struct BusState {
  geo::LatLon position;
  bool moving = false;
};

BusState state_at(const Phase& p, double tau) {
  if (p.kind != PhaseKind::kMove) return {p.from, false};
  const double frac = p.duration > 0.0 ? std::clamp((tau - p.start) / p.duration, 0.0, 1.0) : 1.0;
  return {{p.from.lat + frac * (p.to.lat - p.from.lat), p.from.lon + frac * (p.to.lon - p.from.lon)},
          true};
}

// Global stop index for every waypoint (-1 for pass-through waypoints).
using StopLookup = std::vector<int>;

Schedule build_schedule(const RouteScript& route, const StopLookup& stop_of, double speed_mps) {
  Schedule s;
  double t = 0.0;
  auto push = [&](Phase p) {
    p.start = t;
    t += p.duration;
    s.phases.push_back(p);
  };
  auto layover = [&](std::size_t wp) {
    push({PhaseKind::kLayover, 0.0, route.layover_s, route.waypoints[wp], route.waypoints[wp],
          stop_of[wp]});
  };
  auto drive = [&](const std::vector<std::size_t>& path) {
    for (std::size_t i = 1; i < path.size(); ++i) {
      const auto a = route.waypoints[path[i - 1]];
      const auto b = route.waypoints[path[i]];
      push({PhaseKind::kMove, 0.0, geo::distance_m(a, b) / speed_mps, a, b, -1});
      const bool last = i + 1 == path.size();
      if (!last && stop_of[path[i]] >= 0) {
        push({PhaseKind::kDwell, 0.0, route.dwell_s, b, b, stop_of[path[i]]});
      }
    }
  };

  const std::size_t n = route.waypoints.size();
  std::vector<std::size_t> forth(n);
  for (std::size_t i = 0; i < n; ++i) forth[i] = i;
  layover(0);
  drive(forth);
  if (!route.is_loop()) {
    std::vector<std::size_t> back(forth.rbegin(), forth.rend());
    layover(n - 1);
    drive(back);
  }
  s.cycle = t;
  return s;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

}  // namespace

bool RouteScript::is_loop() const {
  return waypoints.size() > 2 && waypoints.front() == waypoints.back();
}

void RouteScript::validate() const {
  if (waypoints.size() < 2) throw ValidationError("route " + name + ": needs at least 2 waypoints");
  if (!(speed_kmh > 0.0)) throw ValidationError("route " + name + ": speed must be positive");
  if (dwell_s < 0.0 || layover_s < 0.0) throw ValidationError("route " + name + ": negative dwell");
  for (auto i : stop_indices) {
    if (i >= waypoints.size()) throw ValidationError("route " + name + ": stop index out of range");
  }
  if (!stop_names.empty() && stop_names.size() != stop_indices.size()) {
    throw ValidationError("route " + name + ": stop names do not match stops");
  }
  auto is_stop = [&](std::size_t i) {
    return std::find(stop_indices.begin(), stop_indices.end(), i) != stop_indices.end();
  };
  if (!is_stop(0) || (!is_loop() && !is_stop(waypoints.size() - 1))) {
    throw ValidationError("route " + name + ": terminals must be stops");
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (waypoints[i] == waypoints[i - 1]) {
      throw ValidationError("route " + name + ": repeated consecutive waypoint");
    }
  }
}

RouteScript RouteScript::from_csv(std::string_view document, std::string name) {
  auto table = text::parse_csv_table(document);
  auto lat = table.column("lat"), lon = table.column("lon"), stop = table.column("is_stop");
  auto stop_name = table.column("name");
  if (!lat || !lon || !stop) {
    throw std::runtime_error("route " + name + ": waypoint CSV needs lat,lon,is_stop columns");
  }
  RouteScript r;
  r.name = std::move(name);
  for (const auto& row : table.rows) {
    auto field = [&](std::size_t i) -> std::string_view {
      if (i >= row.size()) throw std::runtime_error("route " + r.name + ": short row");
      return row[i];
    };
    auto la = text::parse_double(field(*lat));
    auto lo = text::parse_double(field(*lon));
    auto st = text::parse_int(field(*stop));
    if (!la || !lo || !st) throw std::runtime_error("route " + r.name + ": malformed waypoint");
    if (*st) {
      r.stop_indices.push_back(r.waypoints.size());
      if (stop_name) r.stop_names.emplace_back(text::trim(field(*stop_name)));
    }
    r.waypoints.push_back({*la, *lo});
  }
  // A loop's closing waypoint repeats the terminal; it is not a second stop.
  if (r.is_loop() && !r.stop_indices.empty() && r.stop_indices.back() == r.waypoints.size() - 1) {
    r.stop_indices.pop_back();
    if (!r.stop_names.empty()) r.stop_names.pop_back();
  }
  return r;
}

int SimConfig::buses_on(std::size_t route_index) const {
  if (buses_per_route.size() == 1) return buses_per_route[0];
  return buses_per_route.at(route_index);
}

void SimConfig::validate() const {
  if (routes.empty()) throw ValidationError("simulation needs at least one route");
  for (const auto& r : routes) r.validate();
  if (buses_per_route.size() != 1 && buses_per_route.size() != routes.size()) {
    throw ValidationError("buses_per_route must have one entry or one per route");
  }
  for (int b : buses_per_route) {
    if (b <= 0) throw ValidationError("buses_per_route entries must be positive");
  }
  if (!(duration_hours > 0.0)) throw ValidationError("duration must be positive");
  if (report_interval_s <= 0) throw ValidationError("report interval must be positive");
  if (gps_noise_sigma_m < 0.0) throw ValidationError("noise sigma must be non-negative");
  for (double rate : {zero_speed_glitch_rate, duplicate_rate}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("glitch rates must lie in [0, 1)");
  }
  if (!(speed_jitter >= 0.0 && speed_jitter < 1.0)) {
    throw ValidationError("speed jitter must lie in [0, 1)");
  }
}

SimConfig SimConfig::from_key_values(const text::KeyValueFile& kv, const std::string& base_dir) {
  SimConfig cfg;
  const double speed = kv.get_double("sim.speed_kmh", 25.0);
  const double dwell = kv.get_double("sim.dwell_s", 20.0);
  const double layover = kv.get_double("sim.layover_s", 300.0);
  int n = 0;
  for (const auto& path : kv.get_all("sim.route")) {
    std::filesystem::path p(path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    auto route = RouteScript::from_csv(text::read_file(p.string()), "L" + std::to_string(++n));
    route.speed_kmh = speed;
    route.dwell_s = dwell;
    route.layover_s = layover;
    cfg.routes.push_back(std::move(route));
  }
  if (auto b = kv.get("sim.buses_per_route")) {
    cfg.buses_per_route.clear();
    for (const auto& field : text::split_csv_line(*b)) {
      auto v = text::parse_int(field);
      if (!v) throw std::runtime_error("sim.buses_per_route: not an integer list");
      cfg.buses_per_route.push_back(static_cast<int>(*v));
    }
  }
  cfg.duration_hours = kv.get_double("sim.duration_hours", cfg.duration_hours);
  cfg.report_interval_s = static_cast<int>(kv.get_int("sim.report_interval", cfg.report_interval_s));
  cfg.gps_noise_sigma_m = kv.get_double("sim.gps_noise_sigma", cfg.gps_noise_sigma_m);
  cfg.zero_speed_glitch_rate = kv.get_double("sim.zero_speed_glitch_rate", 0.0);
  cfg.duplicate_rate = kv.get_double("sim.duplicate_rate", 0.0);
  cfg.speed_jitter = kv.get_double("sim.speed_jitter", cfg.speed_jitter);
  if (auto s = kv.get("sim.start")) {
    auto ts = parse_timestamp(*s);
    if (!ts) throw std::runtime_error("sim.start: bad timestamp " + *s);
    cfg.start = *ts;
  }
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  cfg.validate();
  return cfg;
}

SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  SimResult out;
  auto& truth = out.truth;

  // Stops, deduplicated by exact coordinates across routes.
  std::map<std::pair<double, double>, int> stop_index;
  std::vector<StopLookup> lookups;
  for (const auto& route : cfg.routes) {
    StopLookup lookup(route.waypoints.size(), -1);
    for (std::size_t s = 0; s < route.stop_indices.size(); ++s) {
      const auto wp = route.stop_indices[s];
      const auto pos = route.waypoints[wp];
      auto [it, inserted] = stop_index.emplace(std::pair{pos.lat, pos.lon},
                                               static_cast<int>(truth.stops.size()));
      if (inserted) {
        BusStop stop;
        stop.stop_id = "GT" + std::to_string(truth.stops.size() + 1);
        stop.name = route.stop_names.empty() ? "Fermata " + std::to_string(truth.stops.size() + 1)
                                             : route.stop_names[s];
        stop.latitude = pos.lat;
        stop.longitude = pos.lon;
        truth.stops.push_back(stop);
      }
      lookup[wp] = it->second;
    }
    if (route.is_loop()) lookup.back() = lookup.front();
    lookups.push_back(std::move(lookup));
  }

  const auto n_reports =
      static_cast<std::int64_t>(std::floor(cfg.duration_hours * 3600.0 / cfg.report_interval_s));
  const double last_report = static_cast<double>((n_reports - 1) * cfg.report_interval_s);
  const double noise_clip = 4.0 * cfg.gps_noise_sigma_m;

  std::map<std::vector<std::string>, std::size_t> route_of_sequence;
  int bus_number = 0;
  for (std::size_t r = 0; r < cfg.routes.size(); ++r) {
    const auto& route = cfg.routes[r];
    const int buses = cfg.buses_on(r);
    for (int b = 0; b < buses; ++b) {
      ++bus_number;
      char unit[16];
      std::snprintf(unit, sizeof(unit), "0811%02d", bus_number);
      std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(b)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);

      const double factor = 1.0 + cfg.speed_jitter * (2.0 * unif(rng) - 1.0);
      const double speed_kmh = route.speed_kmh * factor;
      const Schedule schedule = build_schedule(route, lookups[r], speed_kmh / 3.6);
      const double offset = schedule.cycle * b / buses;

      // Ground-truth trips: terminal departure to next terminal arrival.
      {
        const auto first_cycle = static_cast<std::int64_t>(std::floor(offset / schedule.cycle));
        const auto last_cycle =
            static_cast<std::int64_t>(std::floor((last_report + offset) / schedule.cycle));
        std::optional<Trip> open;
        auto stamp = [&](double t) {
          return Timestamp{cfg.start.seconds + static_cast<std::int64_t>(std::llround(t))};
        };
        for (auto c = first_cycle; c <= last_cycle + 1; ++c) {
          for (const auto& ph : schedule.phases) {
            const double t0 = static_cast<double>(c) * schedule.cycle + ph.start - offset;
            if (ph.kind == PhaseKind::kLayover) {
              if (open && t0 <= last_report) {
                open->stops.push_back({truth.stops[static_cast<std::size_t>(ph.stop)].stop_id, stamp(t0)});
                truth.trips.push_back(std::move(*open));
              }
              open.reset();
              const double t1 = t0 + ph.duration;
              if (t1 >= 0.0 && t1 <= last_report) {
                open = Trip{};
                open->unit_id = unit;
                open->stops.push_back({truth.stops[static_cast<std::size_t>(ph.stop)].stop_id, stamp(t1)});
              }
            } else if (ph.kind == PhaseKind::kDwell && open) {
              open->stops.push_back({truth.stops[static_cast<std::size_t>(ph.stop)].stop_id, stamp(t0)});
            }
          }
        }
      }

      for (std::int64_t n = 0; n < n_reports; ++n) {
        const double t = static_cast<double>(n * cfg.report_interval_s);
        const double tau = std::fmod(t + offset, schedule.cycle);
        const Phase& ph = schedule.at(tau);
        const BusState st = state_at(ph, tau);

        geo::LatLon pos = st.position;
        if (cfg.gps_noise_sigma_m > 0.0) {
          double north = gauss(rng) * cfg.gps_noise_sigma_m;
          double east = gauss(rng) * cfg.gps_noise_sigma_m;
          const double radius = std::hypot(north, east);
          if (radius > noise_clip) {
            north *= noise_clip / radius;
            east *= noise_clip / radius;
          }
          pos = geo::offset(pos, north, east);
        }
        double speed = st.moving ? std::max(0.1, round1(speed_kmh * (1.0 + 0.03 * gauss(rng))))
                                 : round1(0.5 + std::abs(gauss(rng)) * 0.5);
        const double u_glitch = unif(rng);
        const double u_dup = unif(rng);

        RecordKind kind = RecordKind::kClean;
        if (st.moving && u_glitch < cfg.zero_speed_glitch_rate) {
          speed = 0.0;
          kind = RecordKind::kZeroSpeedGlitch;
        }
        GpsRecord rec{pos.lat, pos.lon, speed, unit,
                      Timestamp{cfg.start.seconds + n * cfg.report_interval_s}};
        const bool at_stop = !st.moving && ph.stop >= 0;
        out.records.push_back(rec);
        truth.kinds.push_back(kind);
        truth.at_stop.push_back(at_stop);
        if (u_dup < cfg.duplicate_rate) {
          out.records.push_back(rec);
          truth.kinds.push_back(RecordKind::kDuplicate);
          truth.at_stop.push_back(at_stop);
        }
      }
    }
  }

  // Routes: one per distinct stop sequence, in order of first appearance.
  std::stable_sort(truth.trips.begin(), truth.trips.end(), [](const Trip& a, const Trip& b) {
    return a.stops.front().time < b.stops.front().time ||
           (a.stops.front().time == b.stops.front().time && a.unit_id < b.unit_id);
  });
  for (std::size_t i = 0; i < truth.trips.size(); ++i) {
    auto& trip = truth.trips[i];
    trip.trip_id = "GTT" + std::to_string(i + 1);
    trip.service_id = weekday(trip.stops.front().time) == 0 ? "Festivi" : "Feriali";
    auto ids = trip.stop_ids();
    auto [it, inserted] = route_of_sequence.emplace(ids, truth.routes.size());
    if (inserted) {
      Route route;
      route.route_id = "GTR" + std::to_string(truth.routes.size() + 1);
      route.short_name = std::to_string(truth.routes.size() + 1);
      route.stop_ids = ids;
      truth.routes.push_back(route);
    }
    trip.route_id = truth.routes[it->second].route_id;
    truth.routes[it->second].trip_ids.push_back(trip.trip_id);
  }
  return out;
}

std::string write_stops_csv(const std::vector<BusStop>& stops) {
  std::string out = "stop_id,name,lat,lon\n";
  for (const auto& s : stops) {
    out += text::join_csv({s.stop_id, s.name, text::format_fixed_min(s.latitude, 6),
                           text::format_fixed_min(s.longitude, 6)});
    out += '\n';
  }
  return out;
}

std::vector<BusStop> read_stops_csv(std::string_view document) {
  auto table = text::parse_csv_table(document);
  auto id = table.column("stop_id"), name = table.column("name"), lat = table.column("lat"),
       lon = table.column("lon");
  if (!id || !lat || !lon) throw std::runtime_error("stops CSV needs stop_id,lat,lon columns");
  std::vector<BusStop> stops;
  for (const auto& row : table.rows) {
    BusStop s;
    if (row.size() < table.header.size()) throw std::runtime_error("stops CSV: short row");
    s.stop_id = row[*id];
    s.name = name ? row[*name] : row[*id];
    auto la = text::parse_double(row[*lat]);
    auto lo = text::parse_double(row[*lon]);
    if (!la || !lo) throw std::runtime_error("stops CSV: malformed coordinates");
    s.latitude = *la;
    s.longitude = *lo;
    s.validate();
    stops.push_back(std::move(s));
  }
  return stops;
}

std::string write_trips_csv(const std::vector<Trip>& trips) {
  std::string out = "trip_id,route_id,unit_id,service_id,stop_sequence,stop_id,time\n";
  for (const auto& t : trips) {
    for (std::size_t i = 0; i < t.stops.size(); ++i) {
      out += text::join_csv({t.trip_id, t.route_id, t.unit_id, t.service_id, std::to_string(i + 1),
                             t.stops[i].stop_id, format_timestamp(t.stops[i].time)});
      out += '\n';
    }
  }
  return out;
}

}  // namespace busfeed::sim
