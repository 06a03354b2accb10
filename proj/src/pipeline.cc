#include "busfeed/pipeline.h"

#include <zlib.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "busfeed/predictor.h"

namespace busfeed::pipeline {
namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

bool parse_bool(const std::string& s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + s);
}

// Runs `fn` and rethrows any failure as a StageError for `stage`.
template <typename Fn>
auto stage_guard(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void ensure_out_dir(const Config& cfg) { fs::create_directories(cfg.out_dir); }

std::string require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing input " + path);
  return text::read_file(path);
}

struct CleanedTrace {
  std::vector<GpsRecord> records;
  std::vector<int> flags;
};

CleanedTrace load_cleaned(const Config& cfg) {
  auto parsed = ingest::parse_csv_text(require_file(path_in(cfg, files::kCleaned)));
  return {std::move(parsed.records), std::move(parsed.stop_flags)};
}

std::vector<ingest::StopLabeledRecord> labeled(const CleanedTrace& trace) {
  std::vector<ingest::StopLabeledRecord> out;
  out.reserve(trace.records.size());
  for (std::size_t i = 0; i < trace.records.size(); ++i)
    out.push_back({trace.records[i], trace.flags.empty() ? 0 : trace.flags[i]});
  return out;
}

// Truth stops for labelling and stop errors: an explicit file, else the
// simulator's output. Empty when neither exists.
std::vector<BusStop> truth_stops(const Config& cfg) {
  std::string path = cfg.stops_csv;
  if (path.empty()) path = path_in(cfg, files::kTruthStops);
  if (!fs::exists(path)) return {};
  return sim::read_stops_csv(text::read_file(path));
}

ingest::Split split_for(const Config& cfg, const ingest::WindowConfig& window,
                        const CleanedTrace& trace) {
  auto blocks = ingest::window(std::span<const ingest::StopLabeledRecord>(labeled(trace)), window);
  return ingest::split(std::move(blocks), cfg.split, cfg.seed);
}

nn::Model load_model_file(const Config& cfg) {
  return nn::load_model(require_file(path_in(cfg, files::kModel)));
}

void write_route_trace(const Config& cfg, const nn::Model& model,
                       const std::vector<GpsRecord>& records) {
  std::vector<FeatureTuple> real;
  for (const auto& r : records) {
    if (r.unit_id != records.front().unit_id || real.size() >= cfg.route_records) break;
    real.push_back(to_tuple(r));
  }
  const std::size_t lead = predict::window_length(model);
  std::ostringstream out;
  out << "real_lat,real_lon,pred_lat,pred_lon\n";
  if (real.size() > lead) {
    std::vector<FeatureTuple> pred;
    if (cfg.route_mode == Config::RouteMode::kTeacherForced) {
      pred = predict::teacher_forced(model, real);
    } else {
      predict::PredictionRequest req{{real.begin(), real.begin() + static_cast<std::ptrdiff_t>(lead)},
                                     static_cast<int>(real.size() - lead)};
      pred = predict::rollout(model, req);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto& r = real[lead + i];
      out << text::format_double(r.lat) << "," << text::format_double(r.lon) << ","
          << text::format_double(pred[i].lat) << "," << text::format_double(pred[i].lon) << "\n";
    }
  }
  text::write_file(path_in(cfg, files::kRouteTrace), out.str());
}

}  // namespace

std::string path_in(const Config& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

Config Config::load(const std::string& path) {
  auto kv = text::KeyValueFile::load(path);
  auto cfg = from_key_values(kv, fs::path(path).parent_path().string());
  cfg.config_path = path;
  return cfg;
}

Config Config::from_key_values(const text::KeyValueFile& kv, const std::string& base_dir) {
  Config c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  if (auto m = kv.get("train.mode")) c.mode = nn::parse_mode(*m);
  if (auto m = kv.get("mode")) c.mode = nn::parse_mode(*m);
  if (kv.has("sim.route")) {
    c.sim = sim::SimConfig::from_key_values(kv, base_dir);
    for (const auto& r : kv.get_all("sim.route")) c.route_files.push_back(resolve(base_dir, r));
  }
  c.input_csv = resolve(base_dir, kv.get_or("input", ""));
  c.stops_csv = resolve(base_dir, kv.get_or("stops", ""));
  if (auto o = kv.get("out")) c.out_dir = resolve(base_dir, *o);

  c.cleaning.position_jitter_m = kv.get_double("clean.position_jitter", c.cleaning.position_jitter_m);

  c.window.k = static_cast<int>(kv.get_int("window.k", c.window.k));
  c.window.stride = static_cast<int>(kv.get_int("window.stride", c.window.stride));
  c.window.max_gap_seconds = kv.get_int("window.max_gap", c.window.max_gap_seconds);

  c.split.train = kv.get_double("split.train", c.split.train);
  c.split.validation = kv.get_double("split.validation", c.split.validation);
  c.split.test = kv.get_double("split.test", c.split.test);

  c.train.hidden_size = static_cast<int>(kv.get_int("train.hidden", c.train.hidden_size));
  c.train.epochs = static_cast<int>(kv.get_int("train.epochs", c.train.epochs));
  c.train.batch_size = static_cast<int>(kv.get_int("train.batch", c.train.batch_size));
  c.train.learning_rate = kv.get_double("train.lr", c.train.learning_rate);
  c.train.init_scale = kv.get_double("train.init_scale", c.train.init_scale);
  c.label_radius_m = kv.get_double("labels.radius", c.label_radius_m);

  if (auto m = kv.get("predict.route_mode")) {
    if (*m == "teacher_forced") c.route_mode = Config::RouteMode::kTeacherForced;
    else if (*m == "autoregressive") c.route_mode = Config::RouteMode::kAutoregressive;
    else throw std::invalid_argument("predict.route_mode must be teacher_forced or autoregressive");
  }
  c.route_records = static_cast<std::size_t>(kv.get_int("predict.route_records", 360));

  c.cluster_radius_m = kv.get_double("cluster.radius", c.cluster_radius_m);
  c.min_cluster_size = static_cast<std::size_t>(kv.get_int("cluster.min_size", 5));

  auto& s = c.segmentation;
  s.drop_partial = true;
  s.stop_radius_m = kv.get_double("segment.stop_radius", s.stop_radius_m);
  s.dwell_speed_kmh = kv.get_double("segment.dwell_speed", s.dwell_speed_kmh);
  s.dwell_threshold_s = kv.get_double("segment.dwell_s", s.dwell_threshold_s);
  s.max_gap_s = kv.get_int("segment.max_gap", s.max_gap_s);
  if (auto v = kv.get("segment.drop_partial")) s.drop_partial = parse_bool(*v);
  s.terminal_stops = kv.get_all("segment.terminal");

  c.agency.agency_id = kv.get_or("agency.id", c.agency.agency_id);
  c.agency.agency_name = kv.get_or("agency.name", c.agency.agency_name);
  c.agency.agency_url = kv.get_or("agency.url", c.agency.agency_url);
  c.agency.agency_timezone = kv.get_or("agency.timezone", c.agency.agency_timezone);

  c.set_seed(c.seed);
  c.window.validate();
  c.split.validate();
  return c;
}

void Config::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  if (sim) sim->seed = s;
}

std::string Config::describe() const {
  text::KeyValueFile kv;
  auto num = [](double x) { return text::format_double(x); };
  kv.set("seed", std::to_string(seed));
  kv.set("mode", nn::to_string(mode));
  if (sim) {
    for (const auto& r : sim->routes) kv.set("sim.route", r.name);
    std::string buses;
    for (std::size_t i = 0; i < sim->routes.size(); ++i)
      buses += (i ? "," : "") + std::to_string(sim->buses_on(i));
    kv.set("sim.buses_per_route", buses);
    kv.set("sim.duration_hours", num(sim->duration_hours));
    kv.set("sim.report_interval", std::to_string(sim->report_interval_s));
    kv.set("sim.gps_noise_sigma", num(sim->gps_noise_sigma_m));
    kv.set("sim.zero_speed_glitch_rate", num(sim->zero_speed_glitch_rate));
    kv.set("sim.duplicate_rate", num(sim->duplicate_rate));
    kv.set("sim.speed_jitter", num(sim->speed_jitter));
    kv.set("sim.start", format_timestamp(sim->start));
  }
  if (!input_csv.empty()) kv.set("input", input_csv);
  if (!stops_csv.empty()) kv.set("stops", stops_csv);
  kv.set("clean.position_jitter", num(cleaning.position_jitter_m));
  kv.set("window.k", std::to_string(window.k));
  kv.set("window.stride", std::to_string(window.stride));
  kv.set("window.max_gap", std::to_string(window.max_gap_seconds));
  kv.set("split.train", num(split.train));
  kv.set("split.validation", num(split.validation));
  kv.set("split.test", num(split.test));
  kv.set("train.hidden", std::to_string(train.hidden_size));
  kv.set("train.epochs", std::to_string(train.epochs));
  kv.set("train.batch", std::to_string(train.batch_size));
  kv.set("train.lr", num(train.learning_rate));
  kv.set("train.init_scale", num(train.init_scale));
  kv.set("labels.radius", num(label_radius_m));
  kv.set("predict.route_mode",
         route_mode == RouteMode::kTeacherForced ? "teacher_forced" : "autoregressive");
  kv.set("predict.route_records", std::to_string(route_records));
  kv.set("cluster.radius", num(cluster_radius_m));
  kv.set("cluster.min_size", std::to_string(min_cluster_size));
  kv.set("segment.stop_radius", num(segmentation.stop_radius_m));
  kv.set("segment.dwell_speed", num(segmentation.dwell_speed_kmh));
  kv.set("segment.dwell_s", num(segmentation.dwell_threshold_s));
  kv.set("segment.max_gap", std::to_string(segmentation.max_gap_s));
  kv.set("segment.drop_partial", segmentation.drop_partial ? "true" : "false");
  kv.set("agency.id", agency.agency_id);
  std::string out;
  for (const auto& [k, v] : kv.entries()) out += k + "=" + v + "\n";
  return out;
}

void simulate(const Config& cfg) {
  stage_guard("simulate", [&] {
    if (!cfg.sim) throw std::runtime_error("config has no sim.route entries");
    ensure_out_dir(cfg);
    auto result = sim::simulate(*cfg.sim);
    text::write_file(path_in(cfg, files::kRaw), ingest::write_csv(result.records));
    text::write_file(path_in(cfg, files::kTruthStops), sim::write_stops_csv(result.truth.stops));
    text::write_file(path_in(cfg, files::kTruthTrips), sim::write_trips_csv(result.truth.trips));
  });
}

void clean(const Config& cfg) {
  stage_guard("clean", [&] {
    ensure_out_dir(cfg);
    const std::string input = cfg.input_csv.empty() ? path_in(cfg, files::kRaw) : cfg.input_csv;
    auto parsed = ingest::parse_csv_text(require_file(input));
    auto cleaned = ingest::clean(std::move(parsed.records), cfg.cleaning);
    cleaned.report.rows_read += parsed.report.removed_malformed;
    cleaned.report.removed_malformed = parsed.report.removed_malformed;

    std::vector<int> flags;
    if (cfg.mode == nn::Mode::kStop) {
      auto stops = truth_stops(cfg);
      if (stops.empty()) throw std::runtime_error("stop mode needs a stops file for labels");
      for (const auto& r : ingest::inject_stop_labels(cleaned.records, stops, cfg.label_radius_m))
        flags.push_back(r.is_stop);
    }
    text::write_file(path_in(cfg, files::kCleaned), ingest::write_csv(cleaned.records, flags));
    text::write_file(path_in(cfg, files::kCleaningReport), cleaned.report.serialize());
  });
}

void train(const Config& cfg) {
  stage_guard("train", [&] {
    auto trace = load_cleaned(cfg);
    if (cfg.mode == nn::Mode::kStop && trace.flags.empty())
      throw std::runtime_error("cleaned trace has no is_stop column; rerun clean in stop mode");
    auto parts = split_for(cfg, cfg.window, trace);
    if (parts.train.empty() || parts.validation.empty())
      throw std::runtime_error("not enough windows to train");

    const auto scaler = ingest::fit_scaler(std::span<const Block>(parts.train));
    auto scale = [&](const std::vector<Block>& in) {
      std::vector<Block> out;
      out.reserve(in.size());
      for (const auto& b : in) out.push_back(ingest::apply_scaler(b, scaler, ScaleDirection::kForward));
      return out;
    };
    nn::TrainConfig tc = cfg.train;
    tc.mode = cfg.mode;
    auto result = nn::train(scale(parts.train), scale(parts.validation), tc);
    nn::Model model{std::move(result.params), scaler, tc, cfg.window};
    text::write_file(path_in(cfg, files::kModel), nn::save_model(model));
    text::write_file(path_in(cfg, files::kLossTrace), result.trace.to_csv());
  });
}

void evaluate(const Config& cfg) {
  stage_guard("evaluate", [&] {
    const auto model = load_model_file(cfg);
    auto parts = split_for(cfg, model.window, load_cleaned(cfg));
    auto report = predict::evaluate(model, parts.test);
    text::write_file(path_in(cfg, files::kEvaluation), report.serialize());
    text::write_file(path_in(cfg, files::kPredVsReal), predict::pred_vs_real_csv(report));
  });
}

void predict(const Config& cfg) {
  stage_guard("predict", [&] {
    const auto model = load_model_file(cfg);
    const auto trace = load_cleaned(cfg);
    // Every position along the trace gets a prediction.
    ingest::WindowConfig dense = model.window;
    dense.stride = 1;
    auto blocks = ingest::window(std::span<const ingest::StopLabeledRecord>(labeled(trace)), dense);

    std::vector<predict::StopPrediction> preds;
    if (model.params.stop_head) {
      preds = predict::predict_stops(model, blocks);
    } else {
      // Without a stop head a predicted standstill counts as a stop.
      preds.reserve(blocks.size());
      for (const auto& b : blocks) {
        auto next = predict::predict_next(model, b.features);
        const bool still = next.sp < cfg.segmentation.dwell_speed_kmh;
        preds.push_back({next, still ? 1.0 : 0.0, still});
      }
    }

    std::ostringstream out;
    out << "unit_id,time,lat,lon,sp,stop_probability,obs_lat,obs_lon,obs_sp\n";
    std::vector<predict::StopPrediction> declared;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (!preds[i].is_stop) continue;
      declared.push_back(preds[i]);
      const auto& p = preds[i].location;
      out << text::join_csv({blocks[i].unit_id, format_timestamp(blocks[i].end_time),
                             text::format_double(p.lat), text::format_double(p.lon),
                             text::format_double(p.sp),
                             text::format_double(preds[i].stop_probability),
                             text::format_double(blocks[i].label.tuple.lat),
                             text::format_double(blocks[i].label.tuple.lon),
                             text::format_double(blocks[i].label.tuple.sp)})
          << "\n";
    }
    text::write_file(path_in(cfg, files::kPredictedStops), out.str());

    write_route_trace(cfg, model, trace.records);

    auto truth = truth_stops(cfg);
    if (!truth.empty())
      text::write_file(path_in(cfg, files::kStopErrors),
                       predict::stop_errors_csv(predict::stop_errors(declared, truth)));
  });
}

void export_gtfs(const Config& cfg) {
  stage_guard("export-gtfs", [&] {
    const auto table = text::parse_csv_table(require_file(path_in(cfg, files::kPredictedStops)));
    const auto lat = table.column("obs_lat"), lon = table.column("obs_lon"),
               sp = table.column("obs_sp");
    if (!lat || !lon || !sp) throw std::runtime_error("predicted_stops.csv lacks observed columns");

    // A stop is placed where the model declares one and the bus is seen
    // standing; the observed fix is far tighter than the predicted position.
    std::vector<geo::LatLon> points;
    for (const auto& row : table.rows) {
      auto s = text::parse_double(row.at(*sp));
      if (!s || *s >= cfg.segmentation.dwell_speed_kmh) continue;
      auto a = text::parse_double(row.at(*lat)), b = text::parse_double(row.at(*lon));
      if (a && b) points.push_back({*a, *b});
    }
    auto clusters = graph::cluster_stops(points, cfg.cluster_radius_m, cfg.min_cluster_size);
    if (clusters.empty()) throw std::runtime_error("no stop clusters recovered");

    const auto trace = load_cleaned(cfg);
    TransitGraph g;
    g.stops = graph::to_bus_stops(clusters);
    g.trips = graph::segment_trips(trace.records, clusters, cfg.segmentation);
    g.routes = graph::group_routes(g.trips, g.stops);
    g.validate();
    auto feed = gtfs::build_feed(g, cfg.agency);
    text::write_file(path_in(cfg, files::kGtfs), gtfs::package(feed));
  });
}

gtfs::ValidationReport validate_gtfs(const std::string& feed_path, const std::string& report_path) {
  return stage_guard("validate-gtfs", [&] {
    auto report = gtfs::validate(gtfs::parse_feed(feed_path));
    if (!report_path.empty()) text::write_file(report_path, report.render());
    return report;
  });
}

bool run_all(const Config& cfg) {
  if (cfg.sim) simulate(cfg);
  clean(cfg);
  train(cfg);
  evaluate(cfg);
  predict(cfg);
  export_gtfs(cfg);
  auto report = validate_gtfs(path_in(cfg, files::kGtfs), path_in(cfg, files::kValidation));
  write_manifest(cfg, "pipeline",
                 {files::kRaw, files::kTruthStops, files::kTruthTrips, files::kCleaned,
                  files::kCleaningReport, files::kModel, files::kLossTrace, files::kEvaluation,
                  files::kPredVsReal, files::kPredictedStops, files::kStopErrors,
                  files::kRouteTrace, files::kGtfs,
                  files::kValidation});
  return report.valid();
}

void write_manifest(const Config& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts) {
  stage_guard("manifest", [&] {
    ensure_out_dir(cfg);
    std::ostringstream out;
    out << "busfeed_version=0.1.0\n";
    out << "command=" << command << "\n";
    if (!cfg.config_path.empty()) {
      out << "config=" << cfg.config_path << "\n";
      if (fs::exists(cfg.config_path)) {
        out << "config_crc32=" << std::hex << std::setw(8) << std::setfill('0')
            << crc32_of(text::read_file(cfg.config_path)) << std::dec << "\n";
      }
    }
    out << cfg.describe();
    auto crc_line = [&](const std::string& label, const std::string& path) {
      if (!fs::exists(path)) return;
      const auto bytes = text::read_file(path);
      out << label << "=" << std::hex << std::setw(8) << std::setfill('0') << crc32_of(bytes)
          << std::dec << " bytes=" << bytes.size() << "\n";
    };
    for (const auto& f : cfg.route_files) crc_line("input." + fs::path(f).filename().string(), f);
    if (!cfg.input_csv.empty()) crc_line("input." + fs::path(cfg.input_csv).filename().string(), cfg.input_csv);
    if (!cfg.stops_csv.empty()) crc_line("input." + fs::path(cfg.stops_csv).filename().string(), cfg.stops_csv);
    for (const auto& a : artifacts) crc_line("artifact." + a, path_in(cfg, a.c_str()));

    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out << "wall_clock=" << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << "\n";
    text::write_file(path_in(cfg, files::kManifest), out.str());
  });
}

}  // namespace busfeed::pipeline
