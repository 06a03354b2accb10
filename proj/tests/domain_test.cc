#include "busfeed/domain.h"

#include <gtest/gtest.h>

#include "busfeed/geo.h"
#include "busfeed/text.h"

namespace busfeed {
namespace {

TEST(Timestamp, ParsesTrackerFormats) {
  auto a = parse_timestamp("2019-12-04 13:54:17");
  auto b = parse_timestamp("2019-12-04  13:54.17");
  auto c = parse_timestamp("2019-12-04T13:54:17");
  ASSERT_TRUE(a && b && c);
  EXPECT_EQ(*a, *b);
  EXPECT_EQ(*a, *c);
  EXPECT_EQ(format_timestamp(*a), "2019-12-04 13:54:17");
  EXPECT_EQ(a->seconds, 1575467657);
}

TEST(Timestamp, RejectsGarbage) {
  for (const char* s : {"", "2019-13-01 00:00:00", "2019-02-30 10:00:00", "2019-12-04 25:00:00",
                        "yesterday", "2019-12-04 13:54:17x"}) {
    EXPECT_FALSE(parse_timestamp(s)) << s;
  }
}

TEST(Timestamp, CalendarHelpers) {
  auto ts = *parse_timestamp("2019-12-08 23:59:59");
  EXPECT_EQ(weekday(ts), 0);
  EXPECT_EQ(format_date_compact(ts), "20191208");
  EXPECT_EQ(format_timestamp(day_start(ts)), "2019-12-08 00:00:00");
  EXPECT_EQ(weekday(*parse_timestamp("2019-12-07 00:00:00")), 6);
}

TEST(GpsRecord, MakeValidatesRanges) {
  auto ts = *parse_timestamp("2019-12-04 13:54:17");
  EXPECT_NO_THROW(GpsRecord::make(42.3724250793457, 13.283947944641113, 17, "844852", ts));
  EXPECT_THROW(GpsRecord::make(91.0, 13.0, 0, "1", ts), ValidationError);
  EXPECT_THROW(GpsRecord::make(42.0, -181.0, 0, "1", ts), ValidationError);
  EXPECT_THROW(GpsRecord::make(42.0, 13.0, -1, "1", ts), ValidationError);
  EXPECT_THROW(GpsRecord::make(42.0, 13.0, 0, "", ts), ValidationError);
}

TEST(ScalerParams, RejectsConstantFeature) {
  ScalerParams p{{42.0, 13.0, 0.0}, {42.5, 13.0, 50.0}};
  try {
    p.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate scaler"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("lon"), std::string::npos);
  }
}

TEST(Trip, RequiresTwoStopsAndIncreasingTimes) {
  Trip t;
  t.trip_id = "T";
  t.stops = {{"A", Timestamp{10}}};
  EXPECT_THROW(t.validate(), ValidationError);
  t.stops.push_back({"B", Timestamp{10}});
  EXPECT_THROW(t.validate(), ValidationError);
  t.stops.back().time = Timestamp{11};
  EXPECT_NO_THROW(t.validate());
}

TransitGraph tiny_graph() {
  TransitGraph g;
  g.stops = {{"A", "Alfa", 42.0, 13.0}, {"B", "Beta", 42.01, 13.0}};
  g.trips = {{"T1", "R1", "u", "Feriali", {{"A", Timestamp{0}}, {"B", Timestamp{60}}}}};
  g.routes = {{"R1", "1", "Alfa - Beta", {"A", "B"}, {"T1"}}};
  return g;
}

TEST(TransitGraph, ValidatesReferences) {
  auto g = tiny_graph();
  EXPECT_NO_THROW(g.validate());
  EXPECT_FALSE(g.empty());

  auto bad = g;
  bad.trips[0].stops[1].stop_id = "ZZ";
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = g;
  bad.routes[0].stop_ids = {"B", "A"};
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = g;
  bad.stops.push_back(bad.stops[0]);
  EXPECT_THROW(bad.validate(), ValidationError);

  EXPECT_TRUE(TransitGraph{}.empty());
}

TEST(Geo, DistanceMatchesConstruction) {
  const geo::LatLon o{42.35, 13.40};
  EXPECT_NEAR(geo::distance_m(o, geo::offset(o, 50.0, 0.0)), 50.0, 1e-6);
  EXPECT_NEAR(geo::distance_m(o, geo::offset(o, 0.0, 50.0)), 50.0, 1e-3);
  EXPECT_NEAR(geo::distance_m(o, geo::offset(o, 30.0, 40.0)), 50.0, 1e-3);
  EXPECT_EQ(geo::distance_m(o, o), 0.0);
}

TEST(Text, FormatsShortestRoundTrip) {
  EXPECT_EQ(text::format_fixed_min(42.367679, 6), "42.367679");
  EXPECT_EQ(text::format_fixed_min(42.5, 6), "42.500000");
  EXPECT_EQ(text::format_fixed_min(13.283947944641113, 6), "13.283947944641113");
  EXPECT_EQ(text::format_double(17.0), "17");
}

TEST(Text, SplitsQuotedCsv) {
  EXPECT_EQ(text::split_csv_line("a,\"b,c\",\"d\"\"e\"\r"),
            (std::vector<std::string>{"a", "b,c", "d\"e"}));
  EXPECT_EQ(text::split_csv_line(text::join_csv({"x,y", "q\"", ""})),
            (std::vector<std::string>{"x,y", "q\"", ""}));
}

TEST(Text, KeyValueFileKeepsRepeatedKeys) {
  auto kv = text::KeyValueFile::parse("# comment\na = 1\nb=x\na = 2 # trailing\n");
  EXPECT_EQ(kv.get_all("a"), (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(kv.get("a"), "2");
  EXPECT_EQ(kv.get_int("missing", 7), 7);
  EXPECT_THROW(kv.get_double("b", 0.0), std::runtime_error);
}

}  // namespace
}  // namespace busfeed
