#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "busfeed/domain.h"
#include "busfeed/ingest.h"

namespace busfeed::nn {

enum class Mode { kRegression, kStop };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

/// Gate weights are stacked row-wise as [forget; update; candidate; output],
/// each block hidden x (hidden + input), acting on the concatenation
/// [h_{t-1}, x_t].
struct LstmParams {
  int input_size = 0;
  int hidden_size = 0;
  int output_size = 0;
  bool stop_head = false;

  Eigen::MatrixXd gate_weights;  // 4H x (H + I)
  Eigen::VectorXd gate_bias;     // 4H
  Eigen::MatrixXd head_weights;  // O x H
  Eigen::VectorXd head_bias;     // O
  Eigen::MatrixXd stop_weights;  // 2 x H, empty without a stop head
  Eigen::VectorXd stop_bias;     // 2

  static LstmParams zeros(int input_size, int hidden_size, int output_size, bool stop_head);
  /// Every entry drawn from uniform(-scale, scale).
  static LstmParams random_uniform(int input_size, int hidden_size, int output_size,
                                   bool stop_head, double scale, std::uint64_t seed);

  auto forget_weights() { return gate_weights.middleRows(0, hidden_size); }
  auto update_weights() { return gate_weights.middleRows(hidden_size, hidden_size); }
  auto candidate_weights() { return gate_weights.middleRows(2 * hidden_size, hidden_size); }
  auto output_weights() { return gate_weights.middleRows(3 * hidden_size, hidden_size); }
  auto forget_bias() { return gate_bias.segment(0, hidden_size); }
  auto update_bias() { return gate_bias.segment(hidden_size, hidden_size); }
  auto candidate_bias() { return gate_bias.segment(2 * hidden_size, hidden_size); }
  auto output_bias() { return gate_bias.segment(3 * hidden_size, hidden_size); }

  /// Contiguous views over every tensor in serialization order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;

  /// Shapes consistent and all entries finite.
  void validate() const;
  bool same_shape(const LstmParams& other) const;
  /// Bitwise equality of every entry.
  bool operator==(const LstmParams& other) const;
};

struct LstmState {
  Eigen::VectorXd c;
  Eigen::VectorXd h;

  static LstmState zeros(int hidden_size);
};

struct TrainConfig {
  int batch_size = 30;
  int hidden_size = 400;
  double learning_rate = 5e-4;
  int epochs = 200;
  int input_features = 3;
  int output_features = 3;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double init_scale = 0.08;
  Mode mode = Mode::kRegression;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainingTrace {
  std::vector<double> train_loss;
  std::vector<double> val_loss;

  std::string to_csv() const;
  bool operator==(const TrainingTrace&) const = default;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network output for one sequence.
struct Prediction {
  Eigen::VectorXd regression;           // output_size
  Eigen::VectorXd stop_logits;          // 2, empty without a stop head
  Eigen::VectorXd stop_probabilities;   // softmax(stop_logits)
};

/// One normalized training example: inputs as columns (input x steps).
struct Sample {
  Eigen::MatrixXd sequence;
  Eigen::VectorXd target;
  int is_stop = 0;
};

Sample to_sample(const Block& normalized_block);

double sigmoid(double x);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
/// Lowest index attaining the maximum.
int argmax_class(const Eigen::VectorXd& p);

LstmState lstm_cell_step(const Eigen::VectorXd& x, const LstmState& state, const LstmParams& params);

/// Runs the cell over the columns of `sequence` from a zero state and applies
/// the ReLU-fed dense head(s) to the final hidden vector.
Prediction forward(const Eigen::MatrixXd& sequence, const LstmParams& params);

/// Regression: mean squared error over outputs. Stop mode adds the
/// cross-entropy of the stop logits against `is_stop`.
double loss(const Prediction& prediction, const Eigen::VectorXd& target, int is_stop, Mode mode);

/// Exact gradient of `loss(forward(sample), ...)` with respect to every
/// parameter, by backpropagation through time.
LstmParams backward(const Sample& sample, const LstmParams& params, Mode mode);

/// Summed loss and gradient over a batch; `per_sample_loss` receives one
/// value per sample when non-null.
double batch_gradient(std::span<const Sample* const> samples, const LstmParams& params, Mode mode,
                      LstmParams& gradient, std::vector<double>* per_sample_loss = nullptr);

/// Mean loss over samples, evaluated in fixed-size chunks.
double mean_loss(std::span<const Sample> samples, const LstmParams& params, Mode mode);

class AdamOptimizer {
 public:
  AdamOptimizer(const LstmParams& like, double learning_rate, double beta1, double beta2,
                double epsilon);
  void step(LstmParams& params, const LstmParams& gradient);
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  LstmParams m_, v_;
};

struct TrainResult {
  LstmParams params;
  TrainingTrace trace;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Blocks must already be normalized with one shared scaler.
TrainResult train(std::span<const Block> train_blocks, std::span<const Block> val_blocks,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Initial parameters `train` starts from for this config.
LstmParams initial_params(const TrainConfig& cfg);

/// Everything needed to run inference on raw tuples.
struct Model {
  LstmParams params;
  ScalerParams scaler;
  TrainConfig config;
  ingest::WindowConfig window;

  bool operator==(const Model&) const = default;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string save_model(const Model& model);
Model load_model(std::string_view blob);

}  // namespace busfeed::nn
