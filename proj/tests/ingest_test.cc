#include "busfeed/ingest.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "busfeed/geo.h"
#include "busfeed/simulator.h"

namespace busfeed::ingest {
namespace {

Timestamp at(std::int64_t s) { return Timestamp{1575417600 + s}; }

GpsRecord rec(double lat, double lon, double sp, std::string unit, std::int64_t t) {
  return GpsRecord{lat, lon, sp, std::move(unit), at(t)};
}

// Straight eastbound trace, one record every 10 s, 20 m apart.
std::vector<GpsRecord> moving_trace(std::size_t n, const std::string& unit = "u1") {
  std::vector<GpsRecord> out;
  const geo::LatLon o{42.35, 13.40};
  for (std::size_t i = 0; i < n; ++i) {
    auto p = geo::offset(o, 0.0, 20.0 * static_cast<double>(i));
    out.push_back(rec(p.lat, p.lon, 7.0 + static_cast<double>(i % 5), unit, 10 * static_cast<std::int64_t>(i)));
  }
  return out;
}

TEST(ParseCsv, ReadsTrackerRow) {
  auto r = parse_csv_text(
      "Latitude,Longitude,Speed,UnitId,Time\n"
      "42.3724250793457,13.283947944641113,17,844852,2019-12-04 13:54:17\n");
  ASSERT_EQ(r.records.size(), 1u);
  const auto& g = r.records[0];
  EXPECT_EQ(g.latitude, 42.3724250793457);
  EXPECT_EQ(g.longitude, 13.283947944641113);
  EXPECT_EQ(g.speed, 17.0);
  EXPECT_EQ(g.unit_id, "844852");
  EXPECT_EQ(format_timestamp(g.timestamp), "2019-12-04 13:54:17");
  EXPECT_EQ(r.report.rows_read, 1u);
  EXPECT_TRUE(r.stop_flags.empty());
}

TEST(ParseCsv, HeaderOnlyYieldsNothing) {
  auto r = parse_csv_text("latitude,longitude,speed,unit_id,time\n");
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.report.rows_read, 0u);
}

TEST(ParseCsv, ColumnOrderDoesNotMatter) {
  auto r = parse_csv_text("time,unit_id,speed,longitude,latitude\n2019-12-04 13:54:17,7,3.5,13.1,42.1\n");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].latitude, 42.1);
  EXPECT_EQ(r.records[0].speed, 3.5);
}

TEST(ParseCsv, MalformedRowsAreCountedAndSkipped) {
  auto r = parse_csv_text(
      "latitude,longitude,speed,unit_id,time\n"
      "91.0,13.0,0,1,2019-12-04 13:54:17\n"
      "42.0,13.0,abc,1,2019-12-04 13:54:17\n"
      "42.0,13.0,5,1,not a time\n"
      "42.0,13.0\n"
      "42.0,13.0,5,1,2019-12-04 13:54:17\n");
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.report.removed_malformed, 4u);
  EXPECT_EQ(r.report.rows_read, r.report.rows_kept + r.report.removed_total());
}

TEST(ParseCsv, MissingColumnNamesIt) {
  try {
    parse_csv_text("latitude,longitude,unit_id,time\n");
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("speed"), std::string::npos);
  }
}

TEST(ParseCsv, WriteThenParseRoundTrips) {
  auto records = moving_trace(20);
  std::vector<int> flags(records.size());
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = i % 3 == 0;
  std::istringstream in(write_csv(records, flags));
  auto r = parse_csv(in);
  EXPECT_EQ(r.records, records);
  EXPECT_EQ(r.stop_flags, flags);
}

TEST(Clean, RemovesConsecutiveDuplicate) {
  auto trace = moving_trace(5);
  trace.insert(trace.begin() + 2, trace[1]);
  trace[2].timestamp.seconds += 1;
  auto out = clean(trace);
  EXPECT_EQ(out.report.removed_duplicates, 1u);
  EXPECT_EQ(out.records, moving_trace(5));
  EXPECT_EQ(out.kept, (std::vector<std::size_t>{0, 1, 3, 4, 5}));
}

TEST(Clean, RemovesZeroSpeedRecordThatMovedFiftyMeters) {
  const geo::LatLon o{42.35, 13.40};
  const auto moved = geo::offset(o, 50.0, 0.0);
  ASSERT_NEAR(geo::distance_m(o, moved), 50.0, 1e-6);
  std::vector<GpsRecord> trace = {rec(o.lat, o.lon, 12, "u", 0), rec(moved.lat, moved.lon, 0, "u", 10)};
  auto out = clean(trace);
  EXPECT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.report.removed_zero_speed_moving, 1u);
}

TEST(Clean, KeepsStationaryZeroSpeedRecords) {
  const geo::LatLon o{42.35, 13.40};
  const auto jitter = geo::offset(o, 3.0, 0.0);
  std::vector<GpsRecord> trace = {rec(o.lat, o.lon, 12, "u", 0), rec(jitter.lat, jitter.lon, 0, "u", 10),
                                  rec(o.lat, o.lon, 0, "u", 20)};
  auto out = clean(trace);
  EXPECT_EQ(out.records.size(), 3u);
}

TEST(Clean, MonotoneTraceUnchanged) {
  auto trace = moving_trace(50);
  auto out = clean(trace);
  EXPECT_EQ(out.records, trace);
  EXPECT_EQ(out.report.removed_total(), 0u);
  EXPECT_EQ(out.report.rows_kept, 50u);
}

TEST(Clean, SortsAndSeparatesUnits) {
  auto a = moving_trace(3, "a");
  auto b = moving_trace(3, "b");  // identical positions on a different unit
  std::vector<GpsRecord> mixed = {b[2], a[0], b[0], a[2], b[1], a[1]};
  auto out = clean(mixed);
  std::vector<GpsRecord> expected = a;
  expected.insert(expected.end(), b.begin(), b.end());
  EXPECT_EQ(out.records, expected);
  EXPECT_EQ(out.kept, (std::vector<std::size_t>{1, 5, 3, 2, 4, 0}));
}

TEST(CleaningReport, SerializesRoundTrip) {
  CleaningReport r{10, 6, 1, 2, 1};
  EXPECT_EQ(CleaningReport::deserialize(r.serialize()), r);
  EXPECT_NE(r.serialize().find("removed_duplicates=2\n"), std::string::npos);
}

// Random traces with injected repeats and displaced zero-speed fixes.
std::vector<GpsRecord> random_dirty_trace(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(0, 60), unit_dist(0, 3), kind(0, 9);
  std::normal_distribution<double> step(0.0, 30.0);
  std::vector<GpsRecord> out;
  geo::LatLon p{42.35, 13.40};
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    const std::string unit = "u" + std::to_string(unit_dist(rng));
    const int k = kind(rng);
    if (k == 0 && !out.empty()) {
      auto dup = out.back();
      dup.timestamp.seconds += 5;
      out.push_back(dup);
      continue;
    }
    p = geo::offset(p, step(rng), step(rng));
    out.push_back(rec(p.lat, p.lon, k == 1 ? 0.0 : 5.0 + k, unit, 10 * i));
  }
  return out;
}

TEST(CleanProperty, IdempotentAndCountsConsistent) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    auto trace = random_dirty_trace(rng);
    auto once = clean(trace);
    auto twice = clean(once.records);
    ASSERT_EQ(twice.records, once.records) << "trial " << trial;
    EXPECT_EQ(twice.report.removed_total(), 0u);
    EXPECT_EQ(once.report.rows_read, once.report.rows_kept + once.report.removed_total());
    EXPECT_EQ(once.kept.size(), once.records.size());
    for (std::size_t i = 0; i < once.kept.size(); ++i) {
      EXPECT_EQ(trace[once.kept[i]], once.records[i]);
    }
  }
}

TEST(Window, SingleFullWindow) {
  auto blocks = window(std::span<const GpsRecord>(moving_trace(10)), WindowConfig{10, 10, 120});
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].features.size(), 9u);
  EXPECT_EQ(blocks[0].label.tuple, to_tuple(moving_trace(10)[9]));
}

TEST(Window, TooShortYieldsNothing) {
  EXPECT_TRUE(window(std::span<const GpsRecord>(moving_trace(9)), WindowConfig{10, 10, 120}).empty());
}

TEST(Window, StrideFiveOverTwentyFive) {
  auto trace = moving_trace(25);
  auto blocks = window(std::span<const GpsRecord>(trace), WindowConfig{10, 5, 120});
  ASSERT_EQ(blocks.size(), 4u);
  for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(blocks[b].start_time, trace[5 * b].timestamp);
}

TEST(Window, CarriesStopFlagOfLabel) {
  auto trace = moving_trace(10);
  std::vector<StopLabeledRecord> labeled;
  for (std::size_t i = 0; i < trace.size(); ++i) labeled.push_back({trace[i], i == 9});
  auto blocks = window(std::span<const StopLabeledRecord>(labeled), WindowConfig{10, 10, 120});
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].label.is_stop, 1);
}

TEST(WindowProperty, NeverSpansUnitsOrGaps) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> gap(1, 200), unit(0, 2), len(0, 80), k_dist(3, 8), s_dist(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GpsRecord> trace;
    std::int64_t t = 0;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      t += gap(rng);
      trace.push_back(rec(42.0 + 1e-4 * i, 13.0, 10, "u" + std::to_string(unit(rng)), t));
    }
    sort_records(trace);
    WindowConfig cfg{k_dist(rng), s_dist(rng), 120};
    for (const auto& b : window(std::span<const GpsRecord>(trace), cfg)) {
      ASSERT_EQ(b.features.size(), static_cast<std::size_t>(cfg.k - 1));
      // Locate the block in the trace and check every step.
      auto first = std::find_if(trace.begin(), trace.end(), [&](const GpsRecord& r) {
        return r.unit_id == b.unit_id && r.timestamp == b.start_time;
      });
      ASSERT_NE(first, trace.end());
      for (int i = 1; i < cfg.k; ++i) {
        const auto& prev = first[i - 1];
        const auto& cur = first[i];
        EXPECT_EQ(cur.unit_id, b.unit_id);
        EXPECT_LE(cur.timestamp.seconds - prev.timestamp.seconds, cfg.max_gap_seconds);
      }
      EXPECT_EQ(first[cfg.k - 1].timestamp, b.end_time);
    }
  }
}

TEST(WindowConfig, RejectsInvalid) {
  EXPECT_THROW((WindowConfig{2, 1, 120}.validate()), ValidationError);
  EXPECT_THROW((WindowConfig{3, 0, 120}.validate()), ValidationError);
  EXPECT_THROW((WindowConfig{3, 1, 0}.validate()), ValidationError);
}

std::vector<Block> numbered_blocks(std::size_t n) {
  std::vector<Block> blocks(n);
  for (std::size_t i = 0; i < n; ++i) {
    blocks[i].unit_id = "u";
    blocks[i].start_time = Timestamp{static_cast<std::int64_t>(i)};
  }
  return blocks;
}

std::multiset<std::int64_t> ids(const std::vector<Block>& blocks) {
  std::multiset<std::int64_t> out;
  for (const auto& b : blocks) out.insert(b.start_time.seconds);
  return out;
}

TEST(Split, TwentyThousandBlocks) {
  auto s = split(numbered_blocks(20000), SplitRatios{}, 1);
  EXPECT_EQ(s.train.size(), 12000u);
  EXPECT_EQ(s.validation.size(), 4000u);
  EXPECT_EQ(s.test.size(), 4000u);
}

TEST(Split, TenBlocks) {
  auto s = split(numbered_blocks(10), SplitRatios{}, 1);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.validation.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, DeterministicUnderSeed) {
  auto a = split(numbered_blocks(500), SplitRatios{}, 42);
  auto b = split(numbered_blocks(500), SplitRatios{}, 42);
  auto c = split(numbered_blocks(500), SplitRatios{}, 43);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(ids(a.train), ids(c.train));
}

TEST(Split, RejectsTinyInput) {
  EXPECT_THROW(split(numbered_blocks(4), SplitRatios{}, 1), std::invalid_argument);
  EXPECT_THROW(split(numbered_blocks(10), SplitRatios{0.5, 0.5, 0.5}, 1), ValidationError);
}

TEST(SplitProperty, PartitionsWithFloorRule) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n_dist(5, 400);
  std::uniform_real_distribution<double> r_dist(0.05, 0.45);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(n_dist(rng));
    const double v = r_dist(rng), t = r_dist(rng);
    SplitRatios ratios{1.0 - v - t, v, t};
    auto s = split(numbered_blocks(n), ratios, rng());
    EXPECT_EQ(s.validation.size(), static_cast<std::size_t>(std::floor(v * static_cast<double>(n))));
    EXPECT_EQ(s.test.size(), static_cast<std::size_t>(std::floor(t * static_cast<double>(n))));
    auto all = ids(s.train);
    for (auto id : ids(s.validation)) all.insert(id);
    for (auto id : ids(s.test)) all.insert(id);
    EXPECT_EQ(all, ids(numbered_blocks(n)));
  }
}

TEST(Scaler, MinMaxAndEndpoints) {
  std::vector<FeatureTuple> t = {{42.0, 13.0, 0.0}, {42.5, 13.2, 40.0}};
  auto p = fit_scaler(std::span<const FeatureTuple>(t));
  EXPECT_EQ(p.min.lat, 42.0);
  EXPECT_EQ(p.max.lat, 42.5);
  auto lo = apply_scaler(p.min, p, ScaleDirection::kForward);
  auto hi = apply_scaler(p.max, p, ScaleDirection::kForward);
  EXPECT_EQ(lo, (FeatureTuple{0, 0, 0}));
  EXPECT_EQ(hi, (FeatureTuple{1, 1, 1}));
  auto mid = apply_scaler({42.25, 13.1, 20.0}, p, ScaleDirection::kForward);
  EXPECT_NEAR(mid.lat, 0.5, 1e-12);
  EXPECT_NEAR(mid.lon, 0.5, 1e-12);
  EXPECT_NEAR(mid.sp, 0.5, 1e-12);
}

TEST(Scaler, SingleRecordIsDegenerate) {
  std::vector<FeatureTuple> t = {{42.0, 13.0, 0.0}};
  try {
    fit_scaler(std::span<const FeatureTuple>(t));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate scaler"), std::string::npos);
  }
}

TEST(Scaler, MatchesFullScanOnSimulatedRecords) {
  sim::SimConfig cfg;
  sim::RouteScript r;
  r.name = "x";
  const geo::LatLon o{42.35, 13.40};
  r.waypoints = {o, geo::offset(o, 400, 900), geo::offset(o, 1200, 200)};
  r.stop_indices = {0, 2};
  cfg.routes = {r};
  cfg.buses_per_route = {3};
  auto records = sim::simulate(cfg).records;
  records.resize(1000);
  auto p = fit_scaler(std::span<const GpsRecord>(records));
  double lat_lo = 1e9, lat_hi = -1e9, lon_lo = 1e9, lon_hi = -1e9, sp_lo = 1e9, sp_hi = -1e9;
  for (const auto& g : records) {
    lat_lo = std::min(lat_lo, g.latitude);
    lat_hi = std::max(lat_hi, g.latitude);
    lon_lo = std::min(lon_lo, g.longitude);
    lon_hi = std::max(lon_hi, g.longitude);
    sp_lo = std::min(sp_lo, g.speed);
    sp_hi = std::max(sp_hi, g.speed);
  }
  EXPECT_EQ(p, (ScalerParams{{lat_lo, lon_lo, sp_lo}, {lat_hi, lon_hi, sp_hi}}));
}

TEST(ScalerProperty, ForwardInverseIsIdentity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3), w(1e-3, 1e3);
  for (int trial = 0; trial < 2000; ++trial) {
    ScalerParams p;
    p.min = {u(rng), u(rng), u(rng)};
    p.max = {p.min.lat + w(rng), p.min.lon + w(rng), p.min.sp + w(rng)};
    FeatureTuple x{u(rng), u(rng), u(rng)};
    auto back = apply_scaler(apply_scaler(x, p, ScaleDirection::kForward), p, ScaleDirection::kInverse);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    EXPECT_LE(rel(back.lat, x.lat), 1e-9);
    EXPECT_LE(rel(back.lon, x.lon), 1e-9);
    EXPECT_LE(rel(back.sp, x.sp), 1e-9);
  }
}

TEST(InjectStopLabels, TrivialCases) {
  std::vector<BusStop> stops = {{"A", "A", 42.35, 13.40}};
  std::vector<GpsRecord> records = {rec(42.35, 13.40, 0, "u", 0), rec(42.45, 13.40, 0, "u", 10)};
  auto out = inject_stop_labels(records, stops, 25.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].is_stop, 1);
  EXPECT_EQ(out[1].is_stop, 0);
  EXPECT_EQ(out[1].record, records[1]);
}

TEST(InjectStopLabels, MatchesBruteForceOnThreeHundredStops) {
  std::mt19937_64 rng(300);
  std::uniform_real_distribution<double> north(0.0, 6000.0), east(0.0, 6000.0);
  const geo::LatLon o{42.30, 13.30};
  std::vector<BusStop> stops;
  for (int i = 0; i < 300; ++i) {
    auto p = geo::offset(o, north(rng), east(rng));
    stops.push_back({"S" + std::to_string(i), "", p.lat, p.lon});
  }
  // A route threading through every stop, sampled finely.
  std::vector<GpsRecord> trace;
  std::normal_distribution<double> noise(0.0, 8.0);
  std::int64_t t = 0;
  for (std::size_t i = 1; i < stops.size(); ++i) {
    geo::LatLon a{stops[i - 1].latitude, stops[i - 1].longitude}, b{stops[i].latitude, stops[i].longitude};
    const int steps = 1 + static_cast<int>(geo::distance_m(a, b) / 15.0);
    for (int s = 0; s < steps; ++s) {
      const double f = static_cast<double>(s) / steps;
      geo::LatLon p{a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon)};
      p = geo::offset(p, noise(rng), noise(rng));
      trace.push_back(rec(p.lat, p.lon, 10, "u", t += 10));
    }
  }
  auto out = inject_stop_labels(trace, stops, 25.0);
  ASSERT_EQ(out.size(), trace.size());
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    int expected = 0;
    for (const auto& s : stops) {
      if (geo::distance_m({s.latitude, s.longitude}, {trace[i].latitude, trace[i].longitude}) <= 25.0) {
        expected = 1;
        break;
      }
    }
    ASSERT_EQ(out[i].is_stop, expected) << "record " << i;
    flagged += static_cast<std::size_t>(expected);
  }
  EXPECT_GT(flagged, 300u);
}

}  // namespace
}  // namespace busfeed::ingest
