#include "busfeed/ingest.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "busfeed/geo.h"
#include "busfeed/text.h"

namespace busfeed::ingest {

namespace {

struct ColumnSpec {
  const char* canonical;
  std::vector<std::string> aliases;
};

const std::vector<ColumnSpec>& required_columns() {
  static const std::vector<ColumnSpec> cols = {
      {"latitude", {"latitude", "lat"}},
      {"longitude", {"longitude", "lon", "lng"}},
      {"speed", {"speed", "sp"}},
      {"unit_id", {"unit_id", "unitid", "unit"}},
      {"time", {"time", "timestamp"}},
  };
  return cols;
}

std::optional<GpsRecord> parse_row(const std::vector<std::string>& fields,
                                   const std::vector<std::size_t>& idx) {
  for (auto i : idx) {
    if (i >= fields.size()) return std::nullopt;
  }
  auto lat = text::parse_double(fields[idx[0]]);
  auto lon = text::parse_double(fields[idx[1]]);
  auto sp = text::parse_double(fields[idx[2]]);
  std::string unit(text::trim(fields[idx[3]]));
  auto ts = parse_timestamp(fields[idx[4]]);
  if (!lat || !lon || !sp || !ts) return std::nullopt;
  GpsRecord r{*lat, *lon, *sp, std::move(unit), *ts};
  try {
    r.validate();
  } catch (const ValidationError&) {
    return std::nullopt;
  }
  return r;
}

bool same_fix(const GpsRecord& a, const GpsRecord& b) {
  return a.latitude == b.latitude && a.longitude == b.longitude && a.speed == b.speed;
}

template <typename Record, typename GetRecord, typename GetFlag>
std::vector<Block> window_impl(std::span<const Record> records, const WindowConfig& cfg,
                               GetRecord get_record, GetFlag get_flag) {
  cfg.validate();
  std::vector<Block> blocks;
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  std::size_t run_begin = 0;
  while (run_begin < records.size()) {
    const std::string& unit = get_record(records[run_begin]).unit_id;
    std::size_t run_end = run_begin;
    while (run_end < records.size() && get_record(records[run_end]).unit_id == unit) ++run_end;

    for (std::size_t start = run_begin; start + k <= run_end;
         start += static_cast<std::size_t>(cfg.stride)) {
      bool ok = true;
      for (std::size_t i = start + 1; i < start + k; ++i) {
        const auto gap = get_record(records[i]).timestamp.seconds -
                         get_record(records[i - 1]).timestamp.seconds;
        if (gap <= 0 || gap > cfg.max_gap_seconds) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      Block b;
      b.unit_id = unit;
      b.features.reserve(k - 1);
      for (std::size_t i = start; i + 1 < start + k; ++i) {
        b.features.push_back(to_tuple(get_record(records[i])));
      }
      const auto& last = records[start + k - 1];
      b.label = LabeledTuple{to_tuple(get_record(last)), get_flag(last)};
      b.start_time = get_record(records[start]).timestamp;
      b.end_time = get_record(last).timestamp;
      blocks.push_back(std::move(b));
    }
    run_begin = run_end;
  }
  return blocks;
}

double scale_one(double x, double lo, double hi, ScaleDirection dir) {
  return dir == ScaleDirection::kForward ? (x - lo) / (hi - lo) : x * (hi - lo) + lo;
}

}  // namespace

std::string CleaningReport::serialize() const {
  std::ostringstream out;
  out << "rows_read=" << rows_read << "\n"
      << "rows_kept=" << rows_kept << "\n"
      << "removed_zero_speed_moving=" << removed_zero_speed_moving << "\n"
      << "removed_duplicates=" << removed_duplicates << "\n"
      << "removed_malformed=" << removed_malformed << "\n";
  return out.str();
}

CleaningReport CleaningReport::deserialize(std::string_view doc) {
  auto kv = text::KeyValueFile::parse(doc);
  CleaningReport r;
  r.rows_read = static_cast<std::size_t>(kv.get_int("rows_read", 0));
  r.rows_kept = static_cast<std::size_t>(kv.get_int("rows_kept", 0));
  r.removed_zero_speed_moving = static_cast<std::size_t>(kv.get_int("removed_zero_speed_moving", 0));
  r.removed_duplicates = static_cast<std::size_t>(kv.get_int("removed_duplicates", 0));
  r.removed_malformed = static_cast<std::size_t>(kv.get_int("removed_malformed", 0));
  return r;
}

void WindowConfig::validate() const {
  if (k < 3) throw ValidationError("window k must be >= 3");
  if (stride < 1) throw ValidationError("window stride must be >= 1");
  if (max_gap_seconds <= 0) throw ValidationError("window max_gap must be positive");
}

void SplitRatios::validate() const {
  for (double r : {train, validation, test}) {
    if (!(r > 0.0 && r < 1.0)) throw ValidationError("split ratios must lie in (0, 1)");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
}

ParseResult parse_csv(std::istream& in) {
  if (!in) throw std::runtime_error("unreadable input stream");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("unreadable input stream");
  return parse_csv_text(ss.str());
}

ParseResult parse_csv_text(std::string_view document) {
  auto table = text::parse_csv_table(document);
  std::vector<std::string> header;
  for (const auto& h : table.header) header.push_back(text::to_lower(text::trim(h)));

  std::vector<std::size_t> idx;
  for (const auto& col : required_columns()) {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < header.size() && !found; ++i) {
      for (const auto& alias : col.aliases) {
        if (header[i] == alias) found = i;
      }
    }
    if (!found) throw std::runtime_error(std::string("missing required column: ") + col.canonical);
    idx.push_back(*found);
  }
  std::optional<std::size_t> stop_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "is_stop") stop_col = i;
  }

  ParseResult result;
  for (const auto& row : table.rows) {
    ++result.report.rows_read;
    auto rec = parse_row(row, idx);
    std::optional<long long> flag;
    if (rec && stop_col) {
      flag = *stop_col < row.size() ? text::parse_int(row[*stop_col]) : std::nullopt;
      if (!flag || (*flag != 0 && *flag != 1)) rec.reset();
    }
    if (!rec) {
      ++result.report.removed_malformed;
      continue;
    }
    result.records.push_back(std::move(*rec));
    if (stop_col) result.stop_flags.push_back(static_cast<int>(*flag));
  }
  result.report.rows_kept = result.records.size();
  return result;
}

std::string write_csv(std::span<const GpsRecord> records, std::span<const int> stop_flags) {
  if (!stop_flags.empty() && stop_flags.size() != records.size()) {
    throw std::invalid_argument("stop flag count does not match record count");
  }
  std::string out = stop_flags.empty() ? "latitude,longitude,speed,unit_id,time\n"
                                       : "latitude,longitude,speed,unit_id,time,is_stop\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out += text::format_double(r.latitude);
    out += ',';
    out += text::format_double(r.longitude);
    out += ',';
    out += text::format_double(r.speed);
    out += ',';
    out += text::csv_escape(r.unit_id);
    out += ',';
    out += format_timestamp(r.timestamp);
    if (!stop_flags.empty()) {
      out += ',';
      out += stop_flags[i] ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

void sort_records(std::vector<GpsRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const GpsRecord& a, const GpsRecord& b) {
    if (a.unit_id != b.unit_id) return a.unit_id < b.unit_id;
    return a.timestamp < b.timestamp;
  });
}

CleanResult clean(std::vector<GpsRecord> records, const CleaningOptions& options) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].unit_id != records[b].unit_id) return records[a].unit_id < records[b].unit_id;
    return records[a].timestamp < records[b].timestamp;
  });
  CleanResult out;
  out.report.rows_read = records.size();
  out.records.reserve(records.size());
  const GpsRecord* prev = nullptr;  // previous kept record of the current unit
  for (std::size_t i : order) {
    auto& r = records[i];
    if (prev && prev->unit_id != r.unit_id) prev = nullptr;
    if (prev) {
      if (same_fix(*prev, r)) {
        ++out.report.removed_duplicates;
        continue;
      }
      if (r.speed == 0.0 && geo::distance_m({prev->latitude, prev->longitude},
                                            {r.latitude, r.longitude}) > options.position_jitter_m) {
        ++out.report.removed_zero_speed_moving;
        continue;
      }
    }
    out.records.push_back(std::move(r));
    out.kept.push_back(i);
    prev = &out.records.back();
  }
  out.report.rows_kept = out.records.size();
  return out;
}

ScalerParams fit_scaler(std::span<const FeatureTuple> tuples) {
  if (tuples.size() < 2) throw ValidationError("degenerate scaler: need at least two records");
  ScalerParams p{tuples[0], tuples[0]};
  for (const auto& t : tuples) {
    t.validate();
    p.min.lat = std::min(p.min.lat, t.lat);
    p.min.lon = std::min(p.min.lon, t.lon);
    p.min.sp = std::min(p.min.sp, t.sp);
    p.max.lat = std::max(p.max.lat, t.lat);
    p.max.lon = std::max(p.max.lon, t.lon);
    p.max.sp = std::max(p.max.sp, t.sp);
  }
  p.validate();
  return p;
}

ScalerParams fit_scaler(std::span<const GpsRecord> records) {
  std::vector<FeatureTuple> tuples;
  tuples.reserve(records.size());
  for (const auto& r : records) tuples.push_back(to_tuple(r));
  return fit_scaler(std::span<const FeatureTuple>(tuples));
}

ScalerParams fit_scaler(std::span<const Block> blocks) {
  std::vector<FeatureTuple> tuples;
  for (const auto& b : blocks) {
    tuples.insert(tuples.end(), b.features.begin(), b.features.end());
    tuples.push_back(b.label.tuple);
  }
  return fit_scaler(std::span<const FeatureTuple>(tuples));
}

FeatureTuple apply_scaler(const FeatureTuple& t, const ScalerParams& p, ScaleDirection dir) {
  return {scale_one(t.lat, p.min.lat, p.max.lat, dir), scale_one(t.lon, p.min.lon, p.max.lon, dir),
          scale_one(t.sp, p.min.sp, p.max.sp, dir)};
}

Block apply_scaler(const Block& block, const ScalerParams& params, ScaleDirection direction) {
  Block out = block;
  for (auto& f : out.features) f = apply_scaler(f, params, direction);
  out.label.tuple = apply_scaler(out.label.tuple, params, direction);
  return out;
}

std::vector<Block> window(std::span<const GpsRecord> records, const WindowConfig& cfg) {
  return window_impl(
      records, cfg, [](const GpsRecord& r) -> const GpsRecord& { return r; },
      [](const GpsRecord&) { return 0; });
}

std::vector<Block> window(std::span<const StopLabeledRecord> records, const WindowConfig& cfg) {
  return window_impl(
      records, cfg, [](const StopLabeledRecord& r) -> const GpsRecord& { return r.record; },
      [](const StopLabeledRecord& r) { return r.is_stop; });
}

Split split(std::vector<Block> blocks, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  if (blocks.size() < 5) throw std::invalid_argument("split needs at least 5 blocks");
  std::mt19937_64 rng(seed);
  std::shuffle(blocks.begin(), blocks.end(), rng);
  const auto n = blocks.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.validation));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test));
  const auto n_train = n - n_val - n_test;
  Split s;
  auto first = std::make_move_iterator(blocks.begin());
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(first + static_cast<std::ptrdiff_t>(n_train),
                      first + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val),
                std::make_move_iterator(blocks.end()));
  return s;
}

std::vector<StopLabeledRecord> inject_stop_labels(std::span<const GpsRecord> records,
                                                  std::span<const BusStop> stops,
                                                  double radius_m) {
  if (stops.empty()) throw std::invalid_argument("inject_stop_labels needs at least one stop");
  // Uniform grid with cells at least `radius_m` wide, so a match can only sit
  // in the 3x3 neighbourhood of the record's cell.
  const double cell_lat = geo::meters_to_lat_deg(radius_m) * 1.01;
  double max_abs_lat = 0.0;
  for (const auto& s : stops) max_abs_lat = std::max(max_abs_lat, std::abs(s.latitude));
  for (const auto& r : records) max_abs_lat = std::max(max_abs_lat, std::abs(r.latitude));
  const double cell_lon =
      geo::meters_to_lon_deg(radius_m, std::min(max_abs_lat + 1.0, 89.0)) * 1.01;

  auto cell_of = [&](double lat, double lon) {
    return std::pair<long long, long long>{static_cast<long long>(std::floor(lat / cell_lat)),
                                           static_cast<long long>(std::floor(lon / cell_lon))};
  };
  std::map<std::pair<long long, long long>, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    grid[cell_of(stops[i].latitude, stops[i].longitude)].push_back(i);
  }

  std::vector<StopLabeledRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto [cy, cx] = cell_of(r.latitude, r.longitude);
    int flag = 0;
    for (long long dy = -1; dy <= 1 && !flag; ++dy) {
      for (long long dx = -1; dx <= 1 && !flag; ++dx) {
        auto it = grid.find({cy + dy, cx + dx});
        if (it == grid.end()) continue;
        for (auto si : it->second) {
          if (geo::distance_m({r.latitude, r.longitude},
                              {stops[si].latitude, stops[si].longitude}) <= radius_m) {
            flag = 1;
            break;
          }
        }
      }
    }
    out.push_back({r, flag});
  }
  return out;
}

}  // namespace busfeed::ingest
