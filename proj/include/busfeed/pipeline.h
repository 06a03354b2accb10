#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "busfeed/gtfs.h"
#include "busfeed/ingest.h"
#include "busfeed/lstm.h"
#include "busfeed/simulator.h"
#include "busfeed/text.h"
#include "busfeed/transit_graph.h"

namespace busfeed::pipeline {

/// Artifact names inside the output directory.
namespace files {
inline constexpr const char* kRaw = "raw.csv";
inline constexpr const char* kTruthStops = "truth_stops.csv";
inline constexpr const char* kTruthTrips = "truth_trips.csv";
inline constexpr const char* kCleaned = "cleaned.csv";
inline constexpr const char* kCleaningReport = "cleaning_report.txt";
inline constexpr const char* kModel = "model.bin";
inline constexpr const char* kLossTrace = "loss_trace.csv";
inline constexpr const char* kEvaluation = "evaluation.txt";
inline constexpr const char* kPredVsReal = "pred_vs_real.csv";
inline constexpr const char* kPredictedStops = "predicted_stops.csv";
inline constexpr const char* kStopErrors = "stop_errors.csv";
inline constexpr const char* kRouteTrace = "route_trace.csv";
inline constexpr const char* kGtfs = "gtfs.zip";
inline constexpr const char* kValidation = "validation.txt";
inline constexpr const char* kManifest = "manifest.txt";
}  // namespace files

struct Config {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  nn::Mode mode = nn::Mode::kStop;

  /// Simulation settings when the config names routes; otherwise `input_csv`
  /// (and, for stop mode, `stops_csv`) supply the data.
  std::optional<sim::SimConfig> sim;
  std::vector<std::string> route_files;
  std::string input_csv;
  std::string stops_csv;

  ingest::CleaningOptions cleaning;
  ingest::WindowConfig window;
  ingest::SplitRatios split;
  nn::TrainConfig train;
  double label_radius_m = 25.0;

  /// Route reconstruction for the first unit: one-step predictions along the
  /// observed trace, or an autoregressive rollout from its first window.
  enum class RouteMode { kTeacherForced, kAutoregressive };
  RouteMode route_mode = RouteMode::kTeacherForced;
  std::size_t route_records = 360;

  double cluster_radius_m = 25.0;
  std::size_t min_cluster_size = 5;
  graph::SegmentationOptions segmentation;
  gtfs::Agency agency;

  /// Fills every field from flat keys; relative paths resolve against the
  /// config file's directory.
  static Config load(const std::string& path);
  static Config from_key_values(const text::KeyValueFile& kv, const std::string& base_dir);
  /// Flat rendering of the effective settings, for the manifest.
  std::string describe() const;
  /// Reapplies `seed` to the simulator and trainer after an override.
  void set_seed(std::uint64_t s);
};

/// Failure of one stage; the CLI reports the stage name and exits nonzero.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

void simulate(const Config& cfg);
void clean(const Config& cfg);
void train(const Config& cfg);
void evaluate(const Config& cfg);
void predict(const Config& cfg);
void export_gtfs(const Config& cfg);
/// Returns the report; writes it next to the feed as validation.txt when
/// `report_path` is non-empty.
gtfs::ValidationReport validate_gtfs(const std::string& feed_path, const std::string& report_path);
/// All stages in order. Returns false if the exported feed has errors.
bool run_all(const Config& cfg);

/// Manifest with config, seed, and CRC-32 plus size of every listed artifact
/// that exists. Only the wall_clock line varies between identical runs.
void write_manifest(const Config& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts);

std::string path_in(const Config& cfg, const char* name);
std::uint32_t crc32_of(std::string_view bytes);

}  // namespace busfeed::pipeline
