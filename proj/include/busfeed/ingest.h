#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "busfeed/domain.h"

namespace busfeed::ingest {

struct CleaningReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t removed_zero_speed_moving = 0;
  std::size_t removed_duplicates = 0;
  std::size_t removed_malformed = 0;

  std::size_t removed_total() const {
    return removed_zero_speed_moving + removed_duplicates + removed_malformed;
  }
  /// Flat `key=value` text block.
  std::string serialize() const;
  static CleaningReport deserialize(std::string_view text);

  bool operator==(const CleaningReport&) const = default;
};

struct WindowConfig {
  int k = 10;
  int stride = 10;
  std::int64_t max_gap_seconds = 120;

  void validate() const;
  bool operator==(const WindowConfig&) const = default;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;

  void validate() const;
};

struct CleaningOptions {
  /// Movement tolerated on a zero-speed record before it is treated as noise.
  double position_jitter_m = 5.0;
};

struct StopLabeledRecord {
  GpsRecord record;
  int is_stop = 0;

  bool operator==(const StopLabeledRecord&) const = default;
};

struct ParseResult {
  std::vector<GpsRecord> records;
  /// Parallel to `records` when the input carried an `is_stop` column.
  std::vector<int> stop_flags;
  CleaningReport report;
};

/// Parses the tracker CSV. Malformed rows are counted and skipped. Throws
/// std::runtime_error if a required column is missing from the header.
ParseResult parse_csv(std::istream& in);
ParseResult parse_csv_text(std::string_view document);

/// Writes `latitude,longitude,speed,unit_id,time`, plus `is_stop` when flags
/// are given.
std::string write_csv(std::span<const GpsRecord> records, std::span<const int> stop_flags = {});

/// Stable sort by (unit_id, timestamp).
void sort_records(std::vector<GpsRecord>& records);

struct CleanResult {
  std::vector<GpsRecord> records;
  /// Input position of every kept record, parallel to `records`.
  std::vector<std::size_t> kept;
  CleaningReport report;
};

/// Removes zero-speed records that moved from the previous kept record of the
/// same unit, and consecutive exact repeats of (lat, lon, speed).
CleanResult clean(std::vector<GpsRecord> records, const CleaningOptions& options = {});

ScalerParams fit_scaler(std::span<const FeatureTuple> tuples);
ScalerParams fit_scaler(std::span<const GpsRecord> records);
/// Fits over every feature and label tuple of the blocks.
ScalerParams fit_scaler(std::span<const Block> blocks);

FeatureTuple apply_scaler(const FeatureTuple& tuple, const ScalerParams& params,
                          ScaleDirection direction);
Block apply_scaler(const Block& block, const ScalerParams& params, ScaleDirection direction);

/// Records must be sorted by (unit_id, timestamp).
std::vector<Block> window(std::span<const GpsRecord> records, const WindowConfig& cfg);
std::vector<Block> window(std::span<const StopLabeledRecord> records, const WindowConfig& cfg);

struct Split {
  std::vector<Block> train;
  std::vector<Block> validation;
  std::vector<Block> test;
};

/// Seeded shuffle then floor-rounded partition; the remainder goes to train.
Split split(std::vector<Block> blocks, const SplitRatios& ratios, std::uint64_t seed);

std::vector<StopLabeledRecord> inject_stop_labels(std::span<const GpsRecord> records,
                                                  std::span<const BusStop> stops,
                                                  double radius_m = 25.0);

}  // namespace busfeed::ingest
