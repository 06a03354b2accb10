#include "busfeed/pipeline.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "busfeed/zip_archive.h"

namespace busfeed::pipeline {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("busfeed_pipeline_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Two buses on one loop for two hours; small enough for per-test runs.
Config small_config(const fs::path& out) {
  auto kv = text::KeyValueFile::parse(
      "seed = 11\n"
      "sim.route = route1.csv\n"
      "sim.buses_per_route = 2\n"
      "sim.duration_hours = 2\n"
      "sim.zero_speed_glitch_rate = 0.05\n"
      "sim.duplicate_rate = 0.05\n"
      "train.mode = stop\n"
      "train.hidden = 4\n"
      "train.epochs = 1\n");
  auto cfg = Config::from_key_values(kv, std::string(BUSFEED_SOURCE_DIR) + "/scenarios");
  cfg.out_dir = out.string();
  return cfg;
}

std::string without_wall_clock(const std::string& manifest) {
  std::istringstream in(manifest);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("wall_clock=", 0) != 0) out += line + "\n";
  return out;
}

TEST(PipelineConfig, ReadsKeysAndResolvesPaths) {
  auto kv = text::KeyValueFile::parse(
      "seed = 5\nmode = regression\ninput = data/gps.csv\nwindow.k = 6\nwindow.stride = 2\n"
      "train.hidden = 12\ntrain.lr = 1e-3\ncluster.min_size = 9\nsegment.terminal = S1\n");
  auto cfg = Config::from_key_values(kv, "/base");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.train.seed, 5u);
  EXPECT_EQ(cfg.mode, nn::Mode::kRegression);
  EXPECT_EQ(cfg.input_csv, "/base/data/gps.csv");
  EXPECT_EQ(cfg.window.k, 6);
  EXPECT_EQ(cfg.window.stride, 2);
  EXPECT_EQ(cfg.train.hidden_size, 12);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_EQ(cfg.min_cluster_size, 9u);
  EXPECT_TRUE(cfg.segmentation.drop_partial);
  EXPECT_EQ(cfg.segmentation.terminal_stops, std::vector<std::string>{"S1"});
  EXPECT_FALSE(cfg.sim.has_value());
}

TEST(PipelineConfig, SeedOverrideReachesSimulatorAndTrainer) {
  auto cfg = small_config(scratch("seed"));
  cfg.set_seed(99);
  EXPECT_EQ(cfg.sim->seed, 99u);
  EXPECT_EQ(cfg.train.seed, 99u);
}

TEST(PipelineConfig, RejectsBadWindow) {
  EXPECT_THROW(Config::from_key_values(text::KeyValueFile::parse("window.k = 1\n"), ""),
               std::invalid_argument);
}

TEST(Pipeline, ZeroEpochsKeepsInitialisationAndEmptyTrace) {
  auto cfg = small_config(scratch("epochs0"));
  cfg.train.epochs = 0;
  simulate(cfg);
  clean(cfg);
  train(cfg);
  auto model = nn::load_model(text::read_file(path_in(cfg, files::kModel)));
  nn::TrainConfig tc = cfg.train;
  tc.mode = nn::Mode::kStop;
  EXPECT_TRUE(model.params == nn::initial_params(tc));
  EXPECT_EQ(text::read_file(path_in(cfg, files::kLossTrace)), "epoch,train_loss,val_loss\n");
}

TEST(Pipeline, CleanWritesLabelsAndReport) {
  auto cfg = small_config(scratch("clean"));
  simulate(cfg);
  clean(cfg);
  auto report = ingest::CleaningReport::deserialize(text::read_file(path_in(cfg, files::kCleaningReport)));
  EXPECT_GT(report.removed_duplicates, 0u);
  EXPECT_EQ(report.rows_read, report.rows_kept + report.removed_total());
  auto parsed = ingest::parse_csv_text(text::read_file(path_in(cfg, files::kCleaned)));
  ASSERT_EQ(parsed.stop_flags.size(), parsed.records.size());
  EXPECT_EQ(parsed.records.size(), report.rows_kept);
}

TEST(Pipeline, StopModeWithoutStopsFails) {
  auto dir = scratch("nostops");
  auto cfg = small_config(dir);
  simulate(cfg);
  fs::remove(path_in(cfg, files::kTruthStops));
  try {
    clean(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "clean");
  }
}

TEST(Pipeline, MissingInputNamesStage) {
  auto cfg = small_config(scratch("missing"));
  try {
    train(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "train");
    EXPECT_NE(std::string(e.what()).find("cleaned.csv"), std::string::npos);
  }
}

TEST(Pipeline, SimulateWithoutRoutesFails) {
  Config cfg;
  cfg.out_dir = scratch("noroutes").string();
  EXPECT_THROW(simulate(cfg), StageError);
}

TEST(Pipeline, ManifestDiffersOnlyInWallClock) {
  auto a = small_config(scratch("manifest_a"));
  auto b = small_config(scratch("manifest_b"));
  for (auto* cfg : {&a, &b}) {
    simulate(*cfg);
    clean(*cfg);
    write_manifest(*cfg, "clean", {files::kRaw, files::kCleaned});
  }
  auto ma = text::read_file(path_in(a, files::kManifest));
  auto mb = text::read_file(path_in(b, files::kManifest));
  EXPECT_NE(ma.find("wall_clock="), std::string::npos);
  EXPECT_NE(ma.find("seed=11"), std::string::npos);
  EXPECT_NE(ma.find("artifact.cleaned.csv="), std::string::npos);
  EXPECT_NE(ma.find("input.route1.csv="), std::string::npos);
  EXPECT_EQ(without_wall_clock(ma), without_wall_clock(mb));
}

TEST(Pipeline, ValidateReportsDanglingReference) {
  auto dir = scratch("dangling");
  std::vector<zip::Entry> entries = {
      {"agency.txt", "agency_id,agency_name,agency_url,agency_timezone\nA,Bus,http://x/,Europe/Rome\n"},
      {"stops.txt", "stop_id,stop_name,stop_lat,stop_lon\nS1,One,42.35,13.40\nS2,Two,42.36,13.41\n"},
      {"routes.txt", "route_id,agency_id,route_short_name,route_long_name,route_type\nR1,A,1,One - Two,3\n"},
      {"trips.txt", "route_id,service_id,trip_id\nR1,WK,T1\n"},
      {"stop_times.txt",
       "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
       "T1,08:00:00,08:00:00,S1,1\nT1,08:05:00,08:05:00,S9,2\n"},
      {"calendar.txt",
       "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n"
       "WK,1,1,1,1,1,0,0,20191201,20191231\n"},
  };
  const auto zip_path = (dir / "feed.zip").string();
  text::write_file(zip_path, zip::write_archive(entries));
  const auto report_path = (dir / "validation.txt").string();
  auto report = validate_gtfs(zip_path, report_path);
  EXPECT_FALSE(report.valid());
  EXPECT_TRUE(report.has_error("FK_STOP"));
  EXPECT_NE(text::read_file(report_path).find("FK_STOP"), std::string::npos);
}

TEST(Pipeline, Crc32KnownValue) {
  EXPECT_EQ(crc32_of("123456789"), 0xCBF43926u);
  EXPECT_EQ(crc32_of(""), 0u);
}

}  // namespace
}  // namespace busfeed::pipeline
