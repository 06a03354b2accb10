#include "busfeed/domain.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "busfeed/text.h"

namespace busfeed {

namespace {

namespace chr = std::chrono;

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

chr::sys_days to_days(Timestamp ts) {
  return chr::sys_days{chr::days{floor_div(ts.seconds, kSecondsPerDay)}};
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

int to_int(std::string_view s) { return static_cast<int>(*text::parse_int(s)); }

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view raw) {
  std::string_view s = text::trim(raw);
  // YYYY-MM-DD
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto ys = s.substr(0, 4), ms = s.substr(5, 2), ds = s.substr(8, 2);
  if (!all_digits(ys) || !all_digits(ms) || !all_digits(ds)) return std::nullopt;
  chr::year_month_day ymd{chr::year{to_int(ys)}, chr::month{static_cast<unsigned>(to_int(ms))},
                          chr::day{static_cast<unsigned>(to_int(ds))}};
  if (!ymd.ok()) return std::nullopt;

  std::string_view rest = s.substr(10);
  if (rest.empty() || (rest.front() != ' ' && rest.front() != 'T')) return std::nullopt;
  rest = text::trim(rest.substr(1));
  // HH:MM:SS or HH:MM.SS
  if (rest.size() != 8 || rest[2] != ':' || (rest[5] != ':' && rest[5] != '.')) return std::nullopt;
  auto hs = rest.substr(0, 2), mins = rest.substr(3, 2), ss = rest.substr(6, 2);
  if (!all_digits(hs) || !all_digits(mins) || !all_digits(ss)) return std::nullopt;
  const int h = to_int(hs), m = to_int(mins), sec = to_int(ss);
  if (h > 23 || m > 59 || sec > 59) return std::nullopt;

  const auto days = chr::sys_days{ymd}.time_since_epoch().count();
  return Timestamp{static_cast<std::int64_t>(days) * kSecondsPerDay + h * 3600 + m * 60 + sec};
}

std::string format_timestamp(Timestamp ts) {
  const auto days = to_days(ts);
  const chr::year_month_day ymd{days};
  const std::int64_t in_day = ts.seconds - days.time_since_epoch().count() * kSecondsPerDay;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(in_day / 3600), static_cast<int>(in_day / 60 % 60),
                static_cast<int>(in_day % 60));
  return buf;
}

Timestamp day_start(Timestamp ts) {
  return Timestamp{floor_div(ts.seconds, kSecondsPerDay) * kSecondsPerDay};
}

int weekday(Timestamp ts) {
  return static_cast<int>(chr::weekday{to_days(ts)}.c_encoding());
}

std::string format_date_compact(Timestamp ts) {
  const chr::year_month_day ymd{to_days(ts)};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d%02u%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

GpsRecord GpsRecord::make(double latitude, double longitude, double speed, std::string unit_id,
                          Timestamp timestamp) {
  GpsRecord r{latitude, longitude, speed, std::move(unit_id), timestamp};
  r.validate();
  return r;
}

void GpsRecord::validate() const {
  if (!std::isfinite(latitude) || latitude < -90.0 || latitude > 90.0) {
    throw ValidationError("latitude out of range [-90, 90]: " + text::format_double(latitude));
  }
  if (!std::isfinite(longitude) || longitude < -180.0 || longitude > 180.0) {
    throw ValidationError("longitude out of range [-180, 180]: " + text::format_double(longitude));
  }
  if (!std::isfinite(speed) || speed < 0.0) {
    throw ValidationError("speed must be non-negative: " + text::format_double(speed));
  }
  if (unit_id.empty()) throw ValidationError("unit_id is empty");
}

void FeatureTuple::validate() const {
  if (!std::isfinite(lat) || !std::isfinite(lon) || !std::isfinite(sp)) {
    throw ValidationError("feature tuple contains a non-finite value");
  }
}

void LabeledTuple::validate() const {
  tuple.validate();
  if (is_stop != 0 && is_stop != 1) throw ValidationError("is_stop must be 0 or 1");
}

void ScalerParams::validate() const {
  min.validate();
  max.validate();
  if (!(max.lat > min.lat)) throw ValidationError("degenerate scaler: latitude is constant");
  if (!(max.lon > min.lon)) throw ValidationError("degenerate scaler: longitude is constant");
  if (!(max.sp > min.sp)) throw ValidationError("degenerate scaler: speed is constant");
}

void BusStop::validate() const {
  if (stop_id.empty()) throw ValidationError("stop_id is empty");
  if (!std::isfinite(latitude) || latitude < -90.0 || latitude > 90.0) {
    throw ValidationError("stop " + stop_id + ": latitude out of range");
  }
  if (!std::isfinite(longitude) || longitude < -180.0 || longitude > 180.0) {
    throw ValidationError("stop " + stop_id + ": longitude out of range");
  }
}

std::vector<std::string> Trip::stop_ids() const {
  std::vector<std::string> ids;
  ids.reserve(stops.size());
  for (const auto& p : stops) ids.push_back(p.stop_id);
  return ids;
}

void Trip::validate() const {
  if (stops.size() < 2) throw ValidationError("trip " + trip_id + " has fewer than two stops");
  for (std::size_t i = 1; i < stops.size(); ++i) {
    if (!(stops[i].time > stops[i - 1].time)) {
      throw ValidationError("trip " + trip_id + ": pass times are not strictly increasing");
    }
  }
}

void TransitGraph::validate() const {
  std::set<std::string> stop_ids;
  for (const auto& s : stops) {
    s.validate();
    if (!stop_ids.insert(s.stop_id).second) throw ValidationError("duplicate stop_id " + s.stop_id);
  }
  std::unordered_map<std::string, const Route*> routes_by_id;
  std::unordered_map<std::string, int> trip_membership;
  for (const auto& r : routes) {
    if (!routes_by_id.emplace(r.route_id, &r).second) {
      throw ValidationError("duplicate route_id " + r.route_id);
    }
    for (const auto& t : r.trip_ids) ++trip_membership[t];
  }
  std::set<std::string> trip_ids;
  for (const auto& t : trips) {
    t.validate();
    if (!trip_ids.insert(t.trip_id).second) throw ValidationError("duplicate trip_id " + t.trip_id);
    for (const auto& p : t.stops) {
      if (!stop_ids.count(p.stop_id)) {
        throw ValidationError("trip " + t.trip_id + " references unknown stop " + p.stop_id);
      }
    }
    auto it = routes_by_id.find(t.route_id);
    if (it == routes_by_id.end()) {
      throw ValidationError("trip " + t.trip_id + " references unknown route " + t.route_id);
    }
    if (trip_membership[t.trip_id] != 1) {
      throw ValidationError("trip " + t.trip_id + " must belong to exactly one route");
    }
    if (it->second->stop_ids != t.stop_ids()) {
      throw ValidationError("trip " + t.trip_id + " does not follow its route's stop sequence");
    }
  }
}

}  // namespace busfeed
