#include "busfeed/lstm.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "busfeed/text.h"

namespace busfeed::nn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kStopClasses = 2;

MatrixXd sigmoid_of(const MatrixXd& a) { return a.unaryExpr([](double x) { return sigmoid(x); }); }

// Column-wise softmax with max subtraction.
MatrixXd softmax_columns(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out.col(j) = softmax(logits.col(j));
  return out;
}

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// Activations of one batched forward pass, kept for backpropagation.
struct ForwardCache {
  std::vector<MatrixXd> z;      // [h_{t-1}; x_t], (H + I) x B
  std::vector<MatrixXd> gates;  // activated [f; u; g; o], 4H x B
  std::vector<MatrixXd> c;      // c[0] is the zero initial state
  std::vector<MatrixXd> tanh_c;
  MatrixXd h_last;
  MatrixXd relu_h;
  MatrixXd y;
  MatrixXd logits;
  MatrixXd probs;
};

void run_forward(const std::vector<MatrixXd>& inputs, const LstmParams& p, ForwardCache& cache) {
  const int H = p.hidden_size;
  const int I = p.input_size;
  const Eigen::Index B = inputs.front().cols();
  const std::size_t T = inputs.size();
  cache.z.assign(T, MatrixXd());
  cache.gates.assign(T, MatrixXd());
  cache.c.assign(T + 1, MatrixXd());
  cache.tanh_c.assign(T, MatrixXd());
  cache.c[0] = MatrixXd::Zero(H, B);
  MatrixXd h = MatrixXd::Zero(H, B);
  MatrixXd a(4 * H, B);
  for (std::size_t t = 0; t < T; ++t) {
    MatrixXd& z = cache.z[t];
    z.resize(H + I, B);
    z.topRows(H) = h;
    z.bottomRows(I) = inputs[t];
    a.noalias() = p.gate_weights * z;
    a.colwise() += p.gate_bias;
    MatrixXd& g = cache.gates[t];
    g.resize(4 * H, B);
    g.topRows(2 * H) = sigmoid_of(a.topRows(2 * H));
    g.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh().matrix();
    g.bottomRows(H) = sigmoid_of(a.bottomRows(H));
    cache.c[t + 1] = g.topRows(H).cwiseProduct(cache.c[t]) +
                     g.middleRows(H, H).cwiseProduct(g.middleRows(2 * H, H));
    cache.tanh_c[t] = cache.c[t + 1].array().tanh().matrix();
    h = g.bottomRows(H).cwiseProduct(cache.tanh_c[t]);
  }
  cache.h_last = std::move(h);
  cache.relu_h = cache.h_last.cwiseMax(0.0);
  cache.y.noalias() = p.head_weights * cache.relu_h;
  cache.y.colwise() += p.head_bias;
  if (p.stop_head) {
    cache.logits.noalias() = p.stop_weights * cache.relu_h;
    cache.logits.colwise() += p.stop_bias;
    cache.probs = softmax_columns(cache.logits);
  }
}

void check_mode(const LstmParams& p, Mode mode) {
  if (mode == Mode::kStop && !p.stop_head) {
    throw std::invalid_argument("stop mode requires a network with a stop head");
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class BlobReader {
 public:
  explicit BlobReader(std::string_view blob) : blob_(blob) {}
  std::uint64_t u64() { return read(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = blob_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == blob_.size(); }
  std::size_t remaining() const { return blob_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (blob_.size() - pos_ < n) throw std::runtime_error("model blob is truncated");
  }
  std::uint64_t read(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view blob_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "BUSLSTM\0";

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::kStop ? "stop" : "regression"; }

Mode parse_mode(const std::string& text) {
  if (text == "regression") return Mode::kRegression;
  if (text == "stop") return Mode::kStop;
  throw std::invalid_argument("unknown mode '" + text + "' (expected regression|stop)");
}

LstmParams LstmParams::zeros(int input_size, int hidden_size, int output_size, bool stop_head) {
  if (input_size <= 0 || hidden_size <= 0 || output_size <= 0) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.output_size = output_size;
  p.stop_head = stop_head;
  p.gate_weights = MatrixXd::Zero(4 * hidden_size, hidden_size + input_size);
  p.gate_bias = VectorXd::Zero(4 * hidden_size);
  p.head_weights = MatrixXd::Zero(output_size, hidden_size);
  p.head_bias = VectorXd::Zero(output_size);
  if (stop_head) {
    p.stop_weights = MatrixXd::Zero(kStopClasses, hidden_size);
    p.stop_bias = VectorXd::Zero(kStopClasses);
  }
  return p;
}

LstmParams LstmParams::random_uniform(int input_size, int hidden_size, int output_size,
                                      bool stop_head, double scale, std::uint64_t seed) {
  LstmParams p = zeros(input_size, hidden_size, output_size, stop_head);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto t : p.tensors()) {
    for (double& x : t) x = dist(rng);
  }
  return p;
}

std::vector<std::span<double>> LstmParams::tensors() {
  std::vector<std::span<double>> out = {
      {gate_weights.data(), static_cast<std::size_t>(gate_weights.size())},
      {gate_bias.data(), static_cast<std::size_t>(gate_bias.size())},
      {head_weights.data(), static_cast<std::size_t>(head_weights.size())},
      {head_bias.data(), static_cast<std::size_t>(head_bias.size())},
  };
  if (stop_head) {
    out.push_back({stop_weights.data(), static_cast<std::size_t>(stop_weights.size())});
    out.push_back({stop_bias.data(), static_cast<std::size_t>(stop_bias.size())});
  }
  return out;
}

std::vector<std::span<const double>> LstmParams::tensors() const {
  auto mutable_views = const_cast<LstmParams*>(this)->tensors();
  return {mutable_views.begin(), mutable_views.end()};
}

std::size_t LstmParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

void LstmParams::validate() const {
  const Eigen::Index H = hidden_size, I = input_size, O = output_size;
  if (H <= 0 || I <= 0 || O <= 0) throw ValidationError("network dimensions must be positive");
  if (gate_weights.rows() != 4 * H || gate_weights.cols() != H + I || gate_bias.size() != 4 * H ||
      head_weights.rows() != O || head_weights.cols() != H || head_bias.size() != O) {
    throw ValidationError("inconsistent LSTM parameter shapes");
  }
  if (stop_head && (stop_weights.rows() != kStopClasses || stop_weights.cols() != H ||
                    stop_bias.size() != kStopClasses)) {
    throw ValidationError("inconsistent stop head shapes");
  }
  for (auto t : tensors()) {
    for (double x : t) {
      if (!std::isfinite(x)) throw ValidationError("non-finite network parameter");
    }
  }
}

bool LstmParams::same_shape(const LstmParams& o) const {
  return input_size == o.input_size && hidden_size == o.hidden_size &&
         output_size == o.output_size && stop_head == o.stop_head;
}

bool LstmParams::operator==(const LstmParams& other) const {
  if (!same_shape(other)) return false;
  auto a = tensors();
  auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    if (a[i].size() && std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

LstmState LstmState::zeros(int hidden_size) {
  return {VectorXd::Zero(hidden_size), VectorXd::Zero(hidden_size)};
}

void TrainConfig::validate() const {
  if (batch_size <= 0 || hidden_size <= 0 || input_features <= 0 || output_features <= 0) {
    throw ValidationError("training sizes must be positive");
  }
  if (epochs < 0) throw ValidationError("epochs must be non-negative");
  if (!(learning_rate >= 0.0 && learning_rate < 1.0)) {
    throw ValidationError("learning rate must lie in [0, 1)");
  }
  if (!(init_scale > 0.0)) throw ValidationError("init scale must be positive");
}

std::string TrainingTrace::to_csv() const {
  std::string out = "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < train_loss.size(); ++i) {
    out += std::to_string(i + 1) + "," + text::format_double(train_loss[i]) + "," +
           text::format_double(val_loss[i]) + "\n";
  }
  return out;
}

Sample to_sample(const Block& b) {
  Sample s;
  s.sequence.resize(3, static_cast<Eigen::Index>(b.features.size()));
  for (std::size_t t = 0; t < b.features.size(); ++t) {
    s.sequence.col(static_cast<Eigen::Index>(t)) << b.features[t].lat, b.features[t].lon,
        b.features[t].sp;
  }
  s.target = VectorXd(3);
  s.target << b.label.tuple.lat, b.label.tuple.lon, b.label.tuple.sp;
  s.is_stop = b.label.is_stop;
  return s;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

VectorXd softmax(const VectorXd& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

int argmax_class(const VectorXd& p) {
  if (p.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = static_cast<int>(i);
  }
  return best;
}

LstmState lstm_cell_step(const VectorXd& x, const LstmState& state, const LstmParams& p) {
  const int H = p.hidden_size;
  if (x.size() != p.input_size || state.c.size() != H || state.h.size() != H ||
      p.gate_weights.rows() != 4 * H || p.gate_weights.cols() != H + p.input_size) {
    throw std::invalid_argument("lstm_cell_step: dimension mismatch");
  }
  VectorXd z(H + p.input_size);
  z << state.h, x;
  const VectorXd a = p.gate_weights * z + p.gate_bias;
  const VectorXd f = a.segment(0, H).unaryExpr([](double v) { return sigmoid(v); });
  const VectorXd u = a.segment(H, H).unaryExpr([](double v) { return sigmoid(v); });
  const VectorXd candidate = a.segment(2 * H, H).array().tanh().matrix();
  const VectorXd o = a.segment(3 * H, H).unaryExpr([](double v) { return sigmoid(v); });
  LstmState next;
  next.c = state.c.cwiseProduct(f) + candidate.cwiseProduct(u);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

Prediction forward(const MatrixXd& sequence, const LstmParams& params) {
  if (sequence.cols() == 0) throw std::invalid_argument("forward: empty input sequence");
  if (sequence.rows() != params.input_size) {
    throw std::invalid_argument("forward: input width does not match the network");
  }
  std::vector<MatrixXd> inputs;
  inputs.reserve(static_cast<std::size_t>(sequence.cols()));
  for (Eigen::Index t = 0; t < sequence.cols(); ++t) inputs.emplace_back(sequence.col(t));
  ForwardCache cache;
  run_forward(inputs, params, cache);
  Prediction out;
  out.regression = cache.y.col(0);
  if (params.stop_head) {
    out.stop_logits = cache.logits.col(0);
    out.stop_probabilities = cache.probs.col(0);
  }
  return out;
}

double loss(const Prediction& prediction, const VectorXd& target, int is_stop, Mode mode) {
  if (prediction.regression.size() != target.size()) {
    throw std::invalid_argument("loss: prediction and label sizes differ");
  }
  double value = (prediction.regression - target).squaredNorm() / static_cast<double>(target.size());
  if (mode == Mode::kStop) {
    if (prediction.stop_logits.size() != kStopClasses) {
      throw std::invalid_argument("loss: stop mode needs stop logits");
    }
    value += log_sum_exp(prediction.stop_logits) - prediction.stop_logits[is_stop ? 1 : 0];
  }
  return value;
}

double batch_gradient(std::span<const Sample* const> samples, const LstmParams& p, Mode mode,
                      LstmParams& grad, std::vector<double>* per_sample_loss) {
  check_mode(p, mode);
  if (samples.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const int H = p.hidden_size;
  const int I = p.input_size;
  const int O = p.output_size;
  const auto B = static_cast<Eigen::Index>(samples.size());
  const auto T = static_cast<std::size_t>(samples.front()->sequence.cols());
  if (T == 0) throw std::invalid_argument("batch_gradient: empty input sequence");

  std::vector<MatrixXd> inputs(T, MatrixXd(I, B));
  MatrixXd targets(O, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const Sample& s = *samples[static_cast<std::size_t>(j)];
    if (static_cast<std::size_t>(s.sequence.cols()) != T || s.sequence.rows() != I ||
        s.target.size() != O) {
      throw std::invalid_argument("batch_gradient: inconsistent sample shapes");
    }
    for (std::size_t t = 0; t < T; ++t) inputs[t].col(j) = s.sequence.col(static_cast<Eigen::Index>(t));
    targets.col(j) = s.target;
  }

  ForwardCache cache;
  run_forward(inputs, p, cache);

  if (!grad.same_shape(p)) grad = LstmParams::zeros(I, H, O, p.stop_head);
  else for (auto t : grad.tensors()) std::fill(t.begin(), t.end(), 0.0);

  // Output layer.
  const MatrixXd diff = cache.y - targets;
  MatrixXd dy = diff * (2.0 / O);
  grad.head_weights.noalias() = dy * cache.relu_h.transpose();
  grad.head_bias = dy.rowwise().sum();
  MatrixXd dr = p.head_weights.transpose() * dy;

  double total = 0.0;
  if (per_sample_loss) per_sample_loss->assign(static_cast<std::size_t>(B), 0.0);
  for (Eigen::Index j = 0; j < B; ++j) {
    double l = diff.col(j).squaredNorm() / O;
    if (mode == Mode::kStop) {
      const int cls = samples[static_cast<std::size_t>(j)]->is_stop ? 1 : 0;
      l += log_sum_exp(cache.logits.col(j)) - cache.logits(cls, j);
    }
    if (per_sample_loss) (*per_sample_loss)[static_cast<std::size_t>(j)] = l;
    total += l;
  }

  if (p.stop_head) {
    if (mode == Mode::kStop) {
      MatrixXd dlogits = cache.probs;
      for (Eigen::Index j = 0; j < B; ++j) {
        dlogits(samples[static_cast<std::size_t>(j)]->is_stop ? 1 : 0, j) -= 1.0;
      }
      grad.stop_weights.noalias() = dlogits * cache.relu_h.transpose();
      grad.stop_bias = dlogits.rowwise().sum();
      dr.noalias() += p.stop_weights.transpose() * dlogits;
    }
  }

  MatrixXd dh = dr.cwiseProduct((cache.h_last.array() > 0.0).cast<double>().matrix());
  MatrixXd dc = MatrixXd::Zero(H, B);
  MatrixXd da(4 * H, B);
  MatrixXd dz(H + I, B);
  MatrixXd step_grad(4 * H, H + I);
  for (std::size_t step = T; step-- > 0;) {
    const MatrixXd& g = cache.gates[step];
    const auto f = g.topRows(H).array();
    const auto u = g.middleRows(H, H).array();
    const auto cand = g.middleRows(2 * H, H).array();
    const auto o = g.bottomRows(H).array();
    const auto tc = cache.tanh_c[step].array();

    dc.array() += dh.array() * o * (1.0 - tc.square());
    da.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    da.topRows(H) = (dc.array() * cache.c[step].array() * f * (1.0 - f)).matrix();
    da.middleRows(H, H) = (dc.array() * cand * u * (1.0 - u)).matrix();
    da.middleRows(2 * H, H) = (dc.array() * u * (1.0 - cand.square())).matrix();

    // Form the step's contribution before accumulating so that summation over
    // the batch happens inside one product.
    step_grad.noalias() = da * cache.z[step].transpose();
    grad.gate_weights += step_grad;
    grad.gate_bias += da.rowwise().sum();
    if (step > 0) {
      dz.noalias() = p.gate_weights.transpose() * da;
      dh = dz.topRows(H);
      dc.array() *= f;
    }
  }
  return total;
}

LstmParams backward(const Sample& sample, const LstmParams& params, Mode mode) {
  LstmParams grad;
  const Sample* ptr = &sample;
  batch_gradient(std::span<const Sample* const>(&ptr, 1), params, mode, grad);
  return grad;
}

double mean_loss(std::span<const Sample> samples, const LstmParams& p, Mode mode) {
  check_mode(p, mode);
  if (samples.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  ForwardCache cache;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    const auto B = static_cast<Eigen::Index>(end - begin);
    const auto T = static_cast<std::size_t>(samples[begin].sequence.cols());
    std::vector<MatrixXd> inputs(T, MatrixXd(p.input_size, B));
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t t = 0; t < T; ++t) {
        inputs[t].col(static_cast<Eigen::Index>(i - begin)) =
            samples[i].sequence.col(static_cast<Eigen::Index>(t));
      }
    }
    run_forward(inputs, p, cache);
    for (std::size_t i = begin; i < end; ++i) {
      const auto j = static_cast<Eigen::Index>(i - begin);
      double l = (cache.y.col(j) - samples[i].target).squaredNorm() / p.output_size;
      if (mode == Mode::kStop) {
        l += log_sum_exp(cache.logits.col(j)) - cache.logits(samples[i].is_stop ? 1 : 0, j);
      }
      total += l;
    }
  }
  return total / static_cast<double>(samples.size());
}

AdamOptimizer::AdamOptimizer(const LstmParams& like, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(LstmParams::zeros(like.input_size, like.hidden_size, like.output_size, like.stop_head)),
      v_(m_) {}

void AdamOptimizer::step(LstmParams& params, const LstmParams& gradient) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto theta = params.tensors();
  auto g = gradient.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    for (std::size_t i = 0; i < theta[k].size(); ++i) {
      m[k][i] = beta1_ * m[k][i] + (1.0 - beta1_) * g[k][i];
      v[k][i] = beta2_ * v[k][i] + (1.0 - beta2_) * g[k][i] * g[k][i];
      theta[k][i] -= lr_ * (m[k][i] / bc1) / (std::sqrt(v[k][i] / bc2) + eps_);
    }
  }
}

LstmParams initial_params(const TrainConfig& cfg) {
  return LstmParams::random_uniform(cfg.input_features, cfg.hidden_size, cfg.output_features,
                                    cfg.mode == Mode::kStop, cfg.init_scale, cfg.seed);
}

TrainResult train(std::span<const Block> train_blocks, std::span<const Block> val_blocks,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_blocks.empty() || val_blocks.empty()) {
    throw std::invalid_argument("train: training and validation splits must be non-empty");
  }
  std::vector<Sample> train_samples, val_samples;
  train_samples.reserve(train_blocks.size());
  for (const auto& b : train_blocks) train_samples.push_back(to_sample(b));
  val_samples.reserve(val_blocks.size());
  for (const auto& b : val_blocks) val_samples.push_back(to_sample(b));

  TrainResult result{initial_params(cfg), {}};
  LstmParams& params = result.params;
  AdamOptimizer adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  // Separate stream from initialization so the shuffle order does not depend
  // on the parameter count.
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  std::vector<std::size_t> order(train_samples.size());
  std::vector<double> sample_loss(train_samples.size());
  std::vector<const Sample*> batch;
  std::vector<double> batch_loss;
  LstmParams grad;
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0, batch_index = 0; begin < order.size();
         begin += batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_samples[order[i]]);
      const double total = batch_gradient(batch, params, cfg.mode, grad, &batch_loss);
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index + 1));
      }
      for (std::size_t i = begin; i < end; ++i) sample_loss[order[i]] = batch_loss[i - begin];
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (auto t : grad.tensors()) {
        for (double& x : t) x *= scale;
      }
      adam.step(params, grad);
    }
    // Summed in block order so the value does not depend on the shuffle.
    const double train_loss =
        std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) /
        static_cast<double>(sample_loss.size());
    const double val_loss = mean_loss(val_samples, params, cfg.mode);
    if (!std::isfinite(val_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
    }
    result.trace.train_loss.push_back(train_loss);
    result.trace.val_loss.push_back(val_loss);
    if (on_epoch) on_epoch(epoch + 1, train_loss, val_loss);
  }
  return result;
}

std::string save_model(const Model& model) {
  model.params.validate();
  model.scaler.validate();
  const auto& p = model.params;
  const auto& c = model.config;
  std::string out(kMagic);
  put_u32(out, kModelFormatVersion);
  // Shape header.
  put_u32(out, static_cast<std::uint32_t>(p.input_size));
  put_u32(out, static_cast<std::uint32_t>(p.hidden_size));
  put_u32(out, static_cast<std::uint32_t>(p.output_size));
  put_u32(out, p.stop_head ? 1u : 0u);
  // Training configuration.
  put_u32(out, static_cast<std::uint32_t>(c.batch_size));
  put_u32(out, static_cast<std::uint32_t>(c.hidden_size));
  put_f64(out, c.learning_rate);
  put_u32(out, static_cast<std::uint32_t>(c.epochs));
  put_u32(out, static_cast<std::uint32_t>(c.input_features));
  put_u32(out, static_cast<std::uint32_t>(c.output_features));
  put_u64(out, c.seed);
  put_f64(out, c.adam_beta1);
  put_f64(out, c.adam_beta2);
  put_f64(out, c.adam_epsilon);
  put_f64(out, c.init_scale);
  put_u32(out, c.mode == Mode::kStop ? 1u : 0u);
  // Window configuration.
  put_u32(out, static_cast<std::uint32_t>(model.window.k));
  put_u32(out, static_cast<std::uint32_t>(model.window.stride));
  put_u64(out, static_cast<std::uint64_t>(model.window.max_gap_seconds));
  // Parameters.
  for (auto t : p.tensors()) {
    for (double x : t) put_f64(out, x);
  }
  // Scaler.
  for (double x : {model.scaler.min.lat, model.scaler.min.lon, model.scaler.min.sp,
                   model.scaler.max.lat, model.scaler.max.lon, model.scaler.max.sp}) {
    put_f64(out, x);
  }
  return out;
}

Model load_model(std::string_view blob) {
  BlobReader in(blob);
  if (in.bytes(kMagic.size()) != kMagic) throw std::runtime_error("not a model file (bad magic)");
  const auto version = in.u32();
  if (version != kModelFormatVersion) {
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  }
  Model m;
  const auto input = static_cast<int>(in.u32());
  const auto hidden = static_cast<int>(in.u32());
  const auto output = static_cast<int>(in.u32());
  const auto stop_head = in.u32();
  if (input <= 0 || hidden <= 0 || output <= 0 || input > 4096 || hidden > 65536 ||
      output > 4096 || stop_head > 1) {
    throw std::runtime_error("model blob has an invalid shape header");
  }
  auto& c = m.config;
  c.batch_size = static_cast<int>(in.u32());
  c.hidden_size = static_cast<int>(in.u32());
  c.learning_rate = in.f64();
  c.epochs = static_cast<int>(in.u32());
  c.input_features = static_cast<int>(in.u32());
  c.output_features = static_cast<int>(in.u32());
  c.seed = in.u64();
  c.adam_beta1 = in.f64();
  c.adam_beta2 = in.f64();
  c.adam_epsilon = in.f64();
  c.init_scale = in.f64();
  c.mode = in.u32() ? Mode::kStop : Mode::kRegression;
  m.window.k = static_cast<int>(in.u32());
  m.window.stride = static_cast<int>(in.u32());
  m.window.max_gap_seconds = static_cast<std::int64_t>(in.u64());

  const auto H = static_cast<std::size_t>(hidden);
  const std::size_t param_count = 4 * H * (H + static_cast<std::size_t>(input)) + 4 * H +
                                  static_cast<std::size_t>(output) * (H + 1) +
                                  (stop_head ? 2 * (H + 1) : 0);
  if (in.remaining() < (param_count + 6) * 8) throw std::runtime_error("model blob is truncated");
  m.params = LstmParams::zeros(input, hidden, output, stop_head == 1);
  for (auto t : m.params.tensors()) {
    for (double& x : t) x = in.f64();
  }
  m.scaler.min.lat = in.f64();
  m.scaler.min.lon = in.f64();
  m.scaler.min.sp = in.f64();
  m.scaler.max.lat = in.f64();
  m.scaler.max.lon = in.f64();
  m.scaler.max.sp = in.f64();
  if (!in.done()) throw std::runtime_error("model blob has trailing bytes");
  m.params.validate();
  m.scaler.validate();
  m.window.validate();
  return m;
}

}  // namespace busfeed::nn
