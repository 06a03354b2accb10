#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "busfeed/gtfs.h"
#include "busfeed/ingest.h"
#include "busfeed/lstm.h"
#include "busfeed/pipeline.h"
#include "busfeed/predictor.h"
#include "busfeed/simulator.h"

namespace py = pybind11;
using namespace busfeed;

namespace {

pipeline::Config load_config(const std::string& config, const std::string& out_dir,
                             std::optional<std::uint64_t> seed) {
  auto cfg = config.empty() ? pipeline::Config{} : pipeline::Config::load(config);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed) cfg.set_seed(*seed);
  return cfg;
}

py::dict report_dict(const ingest::CleaningReport& r) {
  py::dict d;
  d["rows_read"] = r.rows_read;
  d["rows_kept"] = r.rows_kept;
  d["removed_zero_speed_moving"] = r.removed_zero_speed_moving;
  d["removed_duplicates"] = r.removed_duplicates;
  d["removed_malformed"] = r.removed_malformed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_busfeed, m) {
  m.doc() = "Bus GPS traces to next-position models and GTFS feeds";

  py::class_<Timestamp>(m, "Timestamp")
      .def(py::init([](const std::string& s) {
        auto ts = parse_timestamp(s);
        if (!ts) throw py::value_error("bad timestamp: " + s);
        return *ts;
      }))
      .def_readonly("seconds", &Timestamp::seconds)
      .def("__str__", [](const Timestamp& t) { return format_timestamp(t); });

  py::class_<GpsRecord>(m, "GpsRecord")
      .def(py::init([](double lat, double lon, double speed, std::string unit, const std::string& time) {
             auto ts = parse_timestamp(time);
             if (!ts) throw py::value_error("bad timestamp: " + time);
             return GpsRecord::make(lat, lon, speed, std::move(unit), *ts);
           }),
           py::arg("latitude"), py::arg("longitude"), py::arg("speed"), py::arg("unit_id"),
           py::arg("time"))
      .def_readonly("latitude", &GpsRecord::latitude)
      .def_readonly("longitude", &GpsRecord::longitude)
      .def_readonly("speed", &GpsRecord::speed)
      .def_readonly("unit_id", &GpsRecord::unit_id)
      .def_property_readonly("time", [](const GpsRecord& r) { return format_timestamp(r.timestamp); })
      .def("__eq__", [](const GpsRecord& a, const GpsRecord& b) { return a == b; });

  m.def("parse_csv", [](const std::string& text) {
    auto r = ingest::parse_csv_text(text);
    return py::make_tuple(r.records, report_dict(r.report));
  }, "Parse tracker CSV text into (records, report).");
  m.def("clean", [](std::vector<GpsRecord> records) {
    auto r = ingest::clean(std::move(records));
    return py::make_tuple(r.records, report_dict(r.report));
  }, "Drop duplicates and displaced zero-speed rows; returns (records, report).");

  py::class_<nn::Model>(m, "Model")
      .def_static("load", [](const std::string& path) { return nn::load_model(text::read_file(path)); })
      .def_property_readonly("hidden_size", [](const nn::Model& mo) { return mo.params.hidden_size; })
      .def_property_readonly("window_length", [](const nn::Model& mo) { return predict::window_length(mo); })
      .def_property_readonly("has_stop_head", [](const nn::Model& mo) { return mo.params.stop_head; });

  using Tuple3 = std::tuple<double, double, double>;
  auto to_tuples = [](const std::vector<Tuple3>& in) {
    std::vector<FeatureTuple> out;
    for (const auto& [a, b, c] : in) out.push_back({a, b, c});
    return out;
  };
  m.def("predict_next", [to_tuples](const nn::Model& mo, const std::vector<Tuple3>& window) {
    auto p = predict::predict_next(mo, to_tuples(window));
    return Tuple3{p.lat, p.lon, p.sp};
  }, "Next (lat, lon, speed) from k-1 raw tuples.");
  m.def("rollout", [to_tuples](const nn::Model& mo, const std::vector<Tuple3>& window, int steps) {
    std::vector<Tuple3> out;
    for (const auto& p : predict::rollout(mo, {to_tuples(window), steps})) out.push_back({p.lat, p.lon, p.sp});
    return out;
  }, py::arg("model"), py::arg("window"), py::arg("steps"));

  m.def("validate_gtfs", [](const std::string& path) {
    auto report = gtfs::validate(gtfs::parse_feed(path));
    auto rows = [](const std::vector<gtfs::Finding>& fs) {
      py::list l;
      for (const auto& f : fs) l.append(py::make_tuple(f.rule, f.location, f.message));
      return l;
    };
    py::dict d;
    d["valid"] = report.valid();
    d["errors"] = rows(report.errors);
    d["warnings"] = rows(report.warnings);
    return d;
  }, "Validate a feed zip or directory.");

  auto stage = [&m](const char* name, void (*fn)(const pipeline::Config&)) {
    m.def(name, [fn](const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed) {
      auto cfg = load_config(config, out_dir, seed);
      py::gil_scoped_release release;
      fn(cfg);
    }, py::arg("config") = "", py::arg("out_dir") = "", py::arg("seed") = py::none());
  };
  stage("simulate", &pipeline::simulate);
  stage("clean_stage", &pipeline::clean);
  stage("train", &pipeline::train);
  stage("evaluate", &pipeline::evaluate);
  stage("predict", &pipeline::predict);
  stage("export_gtfs", &pipeline::export_gtfs);
  m.def("run_pipeline", [](const std::string& config, const std::string& out_dir,
                           std::optional<std::uint64_t> seed, std::optional<int> epochs) {
    auto cfg = load_config(config, out_dir, seed);
    if (epochs) cfg.train.epochs = *epochs;
    py::gil_scoped_release release;
    return pipeline::run_all(cfg);
  }, py::arg("config"), py::arg("out_dir") = "", py::arg("seed") = py::none(),
     py::arg("epochs") = py::none(), "Every stage in order; True if the feed validates.");

  py::register_exception<pipeline::StageError>(m, "StageError", PyExc_RuntimeError);
}
