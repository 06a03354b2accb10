#pragma once

#include <span>
#include <string>
#include <vector>

#include "busfeed/domain.h"
#include "busfeed/lstm.h"

namespace busfeed::predict {

/// Raw (unscaled) past horizon of k-1 tuples plus the number of future steps.
struct PredictionRequest {
  std::vector<FeatureTuple> recent_window;
  int steps_ahead = 1;
};

/// Number of past tuples the model consumes (k - 1).
std::size_t window_length(const nn::Model& model);

/// One-step prediction in degrees and km/h. Scaling is applied internally.
FeatureTuple predict_next(const nn::Model& model, std::span<const FeatureTuple> window);

/// Autoregressive: each prediction is appended to the window and fed back.
std::vector<FeatureTuple> rollout(const nn::Model& model, const PredictionRequest& request);

/// One-step predictions along an observed trace: element i predicts
/// trace[i + k - 1] from the k - 1 observed tuples before it.
std::vector<FeatureTuple> teacher_forced(const nn::Model& model, std::span<const FeatureTuple> trace);

struct StopPrediction {
  FeatureTuple location;
  double stop_probability = 0.0;
  bool is_stop = false;
};

/// One prediction per block (features only are used). Requires a stop-mode model.
std::vector<StopPrediction> predict_stops(const nn::Model& model, std::span<const Block> windows);

/// Error of a declared stop against the nearest true stop.
struct StopError {
  std::string stop_id;
  double error_lat = 0.0;
  double error_lon = 0.0;
  double distance_m = 0.0;
};

std::vector<StopError> stop_errors(std::span<const StopPrediction> predictions,
                                   std::span<const BusStop> truth);

/// Fraction of true stops with a declared prediction within `radius_m`.
double stop_recall(std::span<const StopPrediction> predictions, std::span<const BusStop> truth,
                   double radius_m);

struct EvaluationReport {
  double rmse_lat = 0.0;
  double rmse_lon = 0.0;
  /// Signed prediction minus label, in degrees, one per block.
  std::vector<double> errors_lat;
  std::vector<double> errors_lon;
  std::vector<FeatureTuple> real;
  std::vector<FeatureTuple> predicted;
  double mean_latency_s = 0.0;

  /// Flat key=value block.
  std::string serialize() const;
};

/// Throws std::invalid_argument on an empty test set.
EvaluationReport evaluate(const nn::Model& model, std::span<const Block> test_blocks);

/// Throws std::invalid_argument on empty input.
double rmse(std::span<const double> errors);

std::string pred_vs_real_csv(const EvaluationReport& report);
std::string stop_errors_csv(std::span<const StopError> errors);

}  // namespace busfeed::predict
