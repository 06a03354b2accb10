#include "busfeed/predictor.h"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "busfeed/geo.h"
#include "busfeed/ingest.h"
#include "busfeed/text.h"

namespace busfeed::predict {

namespace {

Eigen::MatrixXd scaled_sequence(const nn::Model& model, std::span<const FeatureTuple> window) {
  if (window.size() != window_length(model)) {
    throw std::invalid_argument("prediction window has " + std::to_string(window.size()) +
                                " tuples, model expects " + std::to_string(window_length(model)));
  }
  Eigen::MatrixXd seq(3, static_cast<Eigen::Index>(window.size()));
  for (std::size_t t = 0; t < window.size(); ++t) {
    auto s = ingest::apply_scaler(window[t], model.scaler, ScaleDirection::kForward);
    const auto c = static_cast<Eigen::Index>(t);
    seq(0, c) = s.lat;
    seq(1, c) = s.lon;
    seq(2, c) = s.sp;
  }
  return seq;
}

FeatureTuple unscale(const nn::Model& model, const Eigen::VectorXd& y) {
  return ingest::apply_scaler({y(0), y(1), y(2)}, model.scaler, ScaleDirection::kInverse);
}

}  // namespace

std::size_t window_length(const nn::Model& model) {
  return static_cast<std::size_t>(model.window.k - 1);
}

FeatureTuple predict_next(const nn::Model& model, std::span<const FeatureTuple> window) {
  return unscale(model, nn::forward(scaled_sequence(model, window), model.params).regression);
}

std::vector<FeatureTuple> rollout(const nn::Model& model, const PredictionRequest& request) {
  if (request.steps_ahead < 1) throw std::invalid_argument("steps_ahead must be >= 1");
  std::vector<FeatureTuple> window = request.recent_window;
  std::vector<FeatureTuple> out;
  out.reserve(static_cast<std::size_t>(request.steps_ahead));
  for (int s = 0; s < request.steps_ahead; ++s) {
    auto next = predict_next(model, window);
    out.push_back(next);
    window.erase(window.begin());
    window.push_back(next);
  }
  return out;
}

std::vector<FeatureTuple> teacher_forced(const nn::Model& model, std::span<const FeatureTuple> trace) {
  const std::size_t n = window_length(model);
  std::vector<FeatureTuple> out;
  for (std::size_t i = 0; i + n < trace.size(); ++i) {
    out.push_back(predict_next(model, trace.subspan(i, n)));
  }
  return out;
}

std::vector<StopPrediction> predict_stops(const nn::Model& model, std::span<const Block> windows) {
  if (!model.params.stop_head) {
    throw std::invalid_argument("predict_stops needs a stop-mode model");
  }
  std::vector<StopPrediction> out;
  out.reserve(windows.size());
  for (const auto& b : windows) {
    auto pred = nn::forward(scaled_sequence(model, b.features), model.params);
    StopPrediction sp;
    sp.location = unscale(model, pred.regression);
    sp.stop_probability = pred.stop_probabilities(1);
    sp.is_stop = nn::argmax_class(pred.stop_probabilities) == 1;
    out.push_back(sp);
  }
  return out;
}

std::vector<StopError> stop_errors(std::span<const StopPrediction> predictions,
                                   std::span<const BusStop> truth) {
  if (truth.empty()) throw std::invalid_argument("stop_errors needs at least one true stop");
  std::vector<StopError> out;
  for (const auto& p : predictions) {
    if (!p.is_stop) continue;
    const geo::LatLon at{p.location.lat, p.location.lon};
    const BusStop* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& s : truth) {
      const double d = geo::distance_m(at, {s.latitude, s.longitude});
      if (d < best_d) {
        best_d = d;
        best = &s;
      }
    }
    out.push_back({best->stop_id, p.location.lat - best->latitude, p.location.lon - best->longitude,
                   best_d});
  }
  return out;
}

double stop_recall(std::span<const StopPrediction> predictions, std::span<const BusStop> truth,
                   double radius_m) {
  if (truth.empty()) throw std::invalid_argument("stop_recall needs at least one true stop");
  std::size_t hit = 0;
  for (const auto& s : truth) {
    for (const auto& p : predictions) {
      if (p.is_stop &&
          geo::distance_m({p.location.lat, p.location.lon}, {s.latitude, s.longitude}) <= radius_m) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double rmse(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("rmse of an empty error list");
  double sum = 0.0;
  for (double e : errors) sum += e * e;
  return std::sqrt(sum / static_cast<double>(errors.size()));
}

EvaluationReport evaluate(const nn::Model& model, std::span<const Block> test_blocks) {
  if (test_blocks.empty()) throw std::invalid_argument("evaluate needs a non-empty test set");
  EvaluationReport r;
  r.predicted.reserve(test_blocks.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& b : test_blocks) r.predicted.push_back(predict_next(model, b.features));
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
  r.mean_latency_s = std::max(elapsed.count() / static_cast<double>(test_blocks.size()),
                              std::numeric_limits<double>::min());
  for (std::size_t i = 0; i < test_blocks.size(); ++i) {
    const auto& label = test_blocks[i].label.tuple;
    r.real.push_back(label);
    r.errors_lat.push_back(r.predicted[i].lat - label.lat);
    r.errors_lon.push_back(r.predicted[i].lon - label.lon);
  }
  r.rmse_lat = rmse(r.errors_lat);
  r.rmse_lon = rmse(r.errors_lon);
  return r;
}

std::string EvaluationReport::serialize() const {
  std::ostringstream out;
  out << "predictions=" << real.size() << "\n"
      << "rmse_lat=" << text::format_double(rmse_lat) << "\n"
      << "rmse_lon=" << text::format_double(rmse_lon) << "\n"
      << "mean_latency_s=" << text::format_double(mean_latency_s) << "\n";
  return out.str();
}

std::string pred_vs_real_csv(const EvaluationReport& report) {
  std::string out = "real_lat,real_lon,pred_lat,pred_lon\n";
  for (std::size_t i = 0; i < report.real.size(); ++i) {
    out += text::join_csv({text::format_double(report.real[i].lat),
                           text::format_double(report.real[i].lon),
                           text::format_double(report.predicted[i].lat),
                           text::format_double(report.predicted[i].lon)});
    out += '\n';
  }
  return out;
}

std::string stop_errors_csv(std::span<const StopError> errors) {
  std::string out = "stop_id,error_lat,error_lon,distance_m\n";
  for (const auto& e : errors) {
    out += text::join_csv({e.stop_id, text::format_double(e.error_lat),
                           text::format_double(e.error_lon), text::format_double(e.distance_m)});
    out += '\n';
  }
  return out;
}

}  // namespace busfeed::predict
