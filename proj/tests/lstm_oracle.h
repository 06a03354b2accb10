#pragma once

// Independent reference implementations used only by tests. Plain loops over
// doubles; nothing here shares code with the Eigen-based implementation.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "busfeed/lstm.h"

namespace busfeed::testing {

template <typename Real>
Real ref_sigmoid(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

template <typename Real = double>
struct RefOutput {
  std::vector<Real> regression;
  std::vector<Real> logits;
  std::vector<Real> h_last;
};

/// Straight-line evaluation of the gate equations, one scalar at a time.
/// `Real` may be wider than double to keep finite-difference noise down.
template <typename Real = double>
RefOutput<Real> reference_forward(const std::vector<std::vector<double>>& seq,
                                  const nn::LstmParams& p) {
  const int H = p.hidden_size, I = p.input_size;
  std::vector<Real> h(H, 0), c(H, 0);
  for (const auto& x : seq) {
    std::vector<Real> z(H + I);
    for (int i = 0; i < H; ++i) z[i] = h[i];
    for (int i = 0; i < I; ++i) z[H + i] = x[i];
    std::vector<Real> nh(H), nc(H);
    for (int r = 0; r < H; ++r) {
      Real af = p.gate_bias(r), au = p.gate_bias(H + r), ag = p.gate_bias(2 * H + r),
           ao = p.gate_bias(3 * H + r);
      for (int j = 0; j < H + I; ++j) {
        af += p.gate_weights(r, j) * z[j];
        au += p.gate_weights(H + r, j) * z[j];
        ag += p.gate_weights(2 * H + r, j) * z[j];
        ao += p.gate_weights(3 * H + r, j) * z[j];
      }
      const Real f = ref_sigmoid(af), u = ref_sigmoid(au), g = std::tanh(ag), o = ref_sigmoid(ao);
      nc[r] = c[r] * f + g * u;
      nh[r] = o * std::tanh(nc[r]);
    }
    h = nh;
    c = nc;
  }
  RefOutput<Real> out;
  out.h_last = h;
  for (int k = 0; k < p.output_size; ++k) {
    Real y = p.head_bias(k);
    for (int j = 0; j < H; ++j) y += p.head_weights(k, j) * std::max(Real(0), h[j]);
    out.regression.push_back(y);
  }
  if (p.stop_head) {
    for (int k = 0; k < 2; ++k) {
      Real y = p.stop_bias(k);
      for (int j = 0; j < H; ++j) y += p.stop_weights(k, j) * std::max(Real(0), h[j]);
      out.logits.push_back(y);
    }
  }
  return out;
}

template <typename Real>
Real reference_loss(const RefOutput<Real>& out, const std::vector<double>& target, int is_stop,
                    nn::Mode mode) {
  Real l = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Real d = out.regression[i] - target[i];
    l += d * d;
  }
  l /= static_cast<Real>(target.size());
  if (mode == nn::Mode::kStop) {
    const Real m = std::max(out.logits[0], out.logits[1]);
    const Real lse = m + std::log(std::exp(out.logits[0] - m) + std::exp(out.logits[1] - m));
    l += lse - out.logits[is_stop];
  }
  return l;
}

inline std::vector<std::vector<double>> columns(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    std::vector<double> col;
    for (Eigen::Index i = 0; i < m.rows(); ++i) col.push_back(m(i, t));
    out.push_back(col);
  }
  return out;
}

inline std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
};

/// Central finite differences of the (extended precision) reference loss against an analytic
/// gradient. Entries whose perturbation flips a ReLU on the final hidden state
/// are skipped (the loss is not differentiable there). Relative error is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult finite_difference_check(const nn::Sample& s, nn::LstmParams params,
                                               const nn::LstmParams& analytic, nn::Mode mode,
                                               double eps = 1e-5, double floor = 1e-6) {
  const auto seq = columns(s.sequence);
  const auto target = to_vec(s.target);
  using Real = long double;
  auto relu_mask = [](const RefOutput<Real>& o) {
    std::vector<bool> m;
    for (Real h : o.h_last) m.push_back(h > 0);
    return m;
  };
  const auto base_mask = relu_mask(reference_forward<Real>(seq, params));
  GradCheckResult res;
  auto theta = params.tensors();
  auto grad = analytic.tensors();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    for (std::size_t i = 0; i < theta[k].size(); ++i) {
      const double saved = theta[k][i];
      theta[k][i] = saved + eps;
      const Real step_up = static_cast<Real>(theta[k][i]) - saved;
      const auto plus = reference_forward<Real>(seq, params);
      theta[k][i] = saved - eps;
      const Real step_down = saved - static_cast<Real>(theta[k][i]);
      const auto minus = reference_forward<Real>(seq, params);
      theta[k][i] = saved;
      if (relu_mask(plus) != base_mask || relu_mask(minus) != base_mask) {
        ++res.skipped_at_kink;
        continue;
      }
      // Divide by the perturbation actually applied after rounding to double.
      const double numeric = static_cast<double>(
          (reference_loss(plus, target, s.is_stop, mode) -
           reference_loss(minus, target, s.is_stop, mode)) /
          (step_up + step_down));
      const double a = grad[k][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.checked;
    }
  }
  return res;
}

/// Random sample with inputs in [0, 1] and targets in [0, 1].
inline nn::Sample random_sample(int input, int output, int steps, std::uint64_t seed,
                                int is_stop = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Sample s;
  s.sequence.resize(input, steps);
  for (Eigen::Index i = 0; i < s.sequence.size(); ++i) s.sequence.data()[i] = u(rng);
  s.target.resize(output);
  for (Eigen::Index i = 0; i < output; ++i) s.target[i] = u(rng);
  s.is_stop = is_stop;
  return s;
}

}  // namespace busfeed::testing
