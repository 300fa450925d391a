#pragma once

// Small double-precision network engine for the two gesture classifiers:
//
//   StaticNet   logits = W2 relu(W1 x + b1) + b2
//   DynamicNet  e_t = We x_t + be, bidirectional GRU over e_1..e_T,
//               logits = Wo [h_fwd(T) ; h_bwd(1)] + bo
//
// GRU step (gate order r, z, n in the stacked weights):
//   r  = sigmoid(Wir x + bir + Whr h + bhr)
//   z  = sigmoid(Wiz x + biz + Whz h + bhz)
//   n  = tanh(Win x + bin + r * (Whn h + bhn))
//   h' = (1 - z) * n + z * h,        h_0 = 0
//
// Backward passes are written out by hand; grad_check() compares them with
// central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gestop/core.hpp"
#include "gestop/error.hpp"
#include "gestop/features.hpp"

namespace gestop::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
  Vector forward(const Vector& x) const { return weight * x + bias; }
};

struct GruCell {
  Matrix input_weight;   // 3G x in
  Matrix hidden_weight;  // 3G x G
  Vector input_bias;     // 3G
  Vector hidden_bias;    // 3G

  Eigen::Index in() const { return input_weight.cols(); }
  Eigen::Index hidden() const { return hidden_weight.cols(); }
};

struct StaticNet {
  Dense hidden;
  Dense output;
  std::vector<std::string> labels;

  Eigen::Index input_size() const { return hidden.in(); }
  Eigen::Index class_count() const { return output.out(); }
};

struct DynamicNet {
  Dense encoder;
  GruCell forward_gru;
  GruCell backward_gru;
  Dense head;
  std::vector<std::string> labels;

  Eigen::Index input_size() const { return encoder.in(); }
  Eigen::Index class_count() const { return head.out(); }
};

// ---------------------------------------------------------------- parameters

inline void collect(Dense& d, std::vector<std::span<double>>& out) {
  out.emplace_back(d.weight.data(), static_cast<std::size_t>(d.weight.size()));
  out.emplace_back(d.bias.data(), static_cast<std::size_t>(d.bias.size()));
}

inline void collect(GruCell& g, std::vector<std::span<double>>& out) {
  out.emplace_back(g.input_weight.data(), static_cast<std::size_t>(g.input_weight.size()));
  out.emplace_back(g.hidden_weight.data(), static_cast<std::size_t>(g.hidden_weight.size()));
  out.emplace_back(g.input_bias.data(), static_cast<std::size_t>(g.input_bias.size()));
  out.emplace_back(g.hidden_bias.data(), static_cast<std::size_t>(g.hidden_bias.size()));
}

/// Every parameter tensor as a flat view, in a fixed order shared by a net
/// and its gradient.
inline std::vector<std::span<double>> parameters(StaticNet& net) {
  std::vector<std::span<double>> out;
  collect(net.hidden, out);
  collect(net.output, out);
  return out;
}

inline std::vector<std::span<double>> parameters(DynamicNet& net) {
  std::vector<std::span<double>> out;
  collect(net.encoder, out);
  collect(net.forward_gru, out);
  collect(net.backward_gru, out);
  collect(net.head, out);
  return out;
}

template <class Net>
std::size_t parameter_count(const Net& net) {
  std::size_t n = 0;
  for (auto p : parameters(const_cast<Net&>(net))) n += p.size();
  return n;
}

template <class Net>
Net zeros_like(const Net& net) {
  Net out = net;
  out.labels.clear();
  for (auto p : parameters(out)) std::fill(p.begin(), p.end(), 0.0);
  return out;
}

template <class Net>
bool all_finite(const Net& net) {
  for (auto p : parameters(const_cast<Net&>(net))) {
    for (double v : p) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ------------------------------------------------------------ initialization

namespace detail {

inline void glorot(Matrix& m, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
}

inline Dense make_dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  Dense d{Matrix(out, in), Vector::Zero(out)};
  glorot(d.weight, in, out, rng);
  return d;
}

inline GruCell make_gru(Eigen::Index in, Eigen::Index hidden, std::mt19937_64& rng) {
  GruCell g{Matrix(3 * hidden, in), Matrix(3 * hidden, hidden), Vector::Zero(3 * hidden),
            Vector::Zero(3 * hidden)};
  glorot(g.input_weight, in, hidden, rng);
  glorot(g.hidden_weight, hidden, hidden, rng);
  return g;
}

}  // namespace detail

inline constexpr Eigen::Index kDefaultStaticHidden = 64;
inline constexpr Eigen::Index kDefaultEncoderSize = 32;
inline constexpr Eigen::Index kDefaultGruHidden = 64;

inline StaticNet make_static_net(std::vector<std::string> labels, std::uint64_t seed,
                                 Eigen::Index hidden = kDefaultStaticHidden,
                                 Eigen::Index input = kStaticFeatureSize) {
  std::mt19937_64 rng(seed);
  StaticNet net;
  const auto classes = static_cast<Eigen::Index>(labels.size());
  net.hidden = detail::make_dense(input, hidden, rng);
  net.output = detail::make_dense(hidden, classes, rng);
  net.labels = std::move(labels);
  return net;
}

inline DynamicNet make_dynamic_net(std::vector<std::string> labels, std::uint64_t seed,
                                   Eigen::Index encoder = kDefaultEncoderSize,
                                   Eigen::Index gru_hidden = kDefaultGruHidden,
                                   Eigen::Index input = kDynamicFeatureSize) {
  std::mt19937_64 rng(seed);
  DynamicNet net;
  const auto classes = static_cast<Eigen::Index>(labels.size());
  net.encoder = detail::make_dense(input, encoder, rng);
  net.forward_gru = detail::make_gru(encoder, gru_hidden, rng);
  net.backward_gru = detail::make_gru(encoder, gru_hidden, rng);
  net.head = detail::make_dense(2 * gru_hidden, classes, rng);
  net.labels = std::move(labels);
  return net;
}

// ------------------------------------------------------------------- inputs

inline Vector to_vector(std::span<const double> values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// T x 52 matrix, one row per frame.
inline Matrix to_matrix(const DynamicFeatureSequence& seq) {
  Matrix m(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(kDynamicFeatureSize));
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t j = 0; j < kDynamicFeatureSize; ++j) {
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = seq[t][j];
    }
  }
  return m;
}

// ------------------------------------------------------------------ forward

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector forward_static(const StaticNet& net, const Vector& x) {
  if (x.size() != net.input_size()) {
    throw Error(ErrorCode::DimensionMismatch, "static input has " + std::to_string(x.size()) +
                                                  " values, net expects " +
                                                  std::to_string(net.input_size()));
  }
  return net.output.forward(net.hidden.forward(x).cwiseMax(0.0));
}

inline Vector forward_static(const StaticNet& net, const StaticFeature& x) {
  return forward_static(net, to_vector(x));
}

namespace detail {

/// Per-step values of one GRU direction, kept for the backward pass.
struct GruTrace {
  std::vector<Vector> h;       // T+1 states, h[0] = 0
  std::vector<Vector> r, z, n;
  std::vector<Vector> hn;      // Whn h + bhn
};

/// Runs the cell over columns of `inputs` (in x T) in the given order.
inline GruTrace run_gru(const GruCell& cell, const Matrix& inputs, bool reverse) {
  const Eigen::Index g = cell.hidden();
  const Eigen::Index steps = inputs.cols();
  GruTrace tr;
  tr.h.reserve(static_cast<std::size_t>(steps + 1));
  tr.h.push_back(Vector::Zero(g));
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    const Vector& h = tr.h.back();
    const Vector gi = cell.input_weight * inputs.col(t) + cell.input_bias;
    const Vector gh = cell.hidden_weight * h + cell.hidden_bias;
    Vector r = (gi.segment(0, g) + gh.segment(0, g)).unaryExpr(&sigmoid);
    Vector z = (gi.segment(g, g) + gh.segment(g, g)).unaryExpr(&sigmoid);
    Vector hn = gh.segment(2 * g, g);
    Vector n = (gi.segment(2 * g, g) + r.cwiseProduct(hn)).array().tanh().matrix();
    Vector next = (Vector::Ones(g) - z).cwiseProduct(n) + z.cwiseProduct(h);
    tr.r.push_back(std::move(r));
    tr.z.push_back(std::move(z));
    tr.n.push_back(std::move(n));
    tr.hn.push_back(std::move(hn));
    tr.h.push_back(std::move(next));
  }
  return tr;
}

/// Backpropagates dL/dh_final through the trace. Accumulates parameter
/// gradients into `grad` and adds dL/dinput into the matching columns of
/// `dinputs`.
inline void backprop_gru(const GruCell& cell, const GruTrace& tr, const Matrix& inputs, bool reverse,
                         const Vector& dh_final, GruCell& grad, Matrix& dinputs) {
  const Eigen::Index g = cell.hidden();
  const Eigen::Index steps = inputs.cols();
  Vector dh = dh_final;
  Vector gi(3 * g), gh(3 * g);
  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    const auto us = static_cast<std::size_t>(s);
    const Vector& h_prev = tr.h[us];
    const Vector& r = tr.r[us];
    const Vector& z = tr.z[us];
    const Vector& n = tr.n[us];
    const Vector& hn = tr.hn[us];

    const Vector dn = dh.cwiseProduct(Vector::Ones(g) - z);
    const Vector dz = dh.cwiseProduct(h_prev - n);
    const Vector dn_pre = dn.cwiseProduct(Vector::Ones(g) - n.cwiseProduct(n));
    const Vector dr = dn_pre.cwiseProduct(hn);
    const Vector dr_pre = dr.cwiseProduct(r.cwiseProduct(Vector::Ones(g) - r));
    const Vector dz_pre = dz.cwiseProduct(z.cwiseProduct(Vector::Ones(g) - z));

    gi << dr_pre, dz_pre, dn_pre;
    gh << dr_pre, dz_pre, dn_pre.cwiseProduct(r);

    grad.input_weight.noalias() += gi * inputs.col(t).transpose();
    grad.input_bias += gi;
    grad.hidden_weight.noalias() += gh * h_prev.transpose();
    grad.hidden_bias += gh;
    dinputs.col(t).noalias() += cell.input_weight.transpose() * gi;

    dh = dh.cwiseProduct(z) + cell.hidden_weight.transpose() * gh;
  }
}

struct DynamicTrace {
  Matrix encoded;  // E x T
  GruTrace fwd;
  GruTrace bwd;
  Vector features;  // [h_fwd ; h_bwd]
  Vector logits;
};

inline DynamicTrace run_dynamic(const DynamicNet& net, const Matrix& seq) {
  if (seq.rows() == 0) throw Error(ErrorCode::EmptySequence, "forward_dynamic");
  if (seq.cols() != net.input_size()) {
    throw Error(ErrorCode::DimensionMismatch, "dynamic rows have " + std::to_string(seq.cols()) +
                                                  " values, net expects " +
                                                  std::to_string(net.input_size()));
  }
  DynamicTrace tr;
  tr.encoded = (net.encoder.weight * seq.transpose()).colwise() + net.encoder.bias;
  tr.fwd = run_gru(net.forward_gru, tr.encoded, false);
  tr.bwd = run_gru(net.backward_gru, tr.encoded, true);
  const Eigen::Index g = net.forward_gru.hidden();
  tr.features.resize(2 * g);
  tr.features << tr.fwd.h.back(), tr.bwd.h.back();
  tr.logits = net.head.forward(tr.features);
  return tr;
}

}  // namespace detail

/// `seq` holds one time step per row.
inline Vector forward_dynamic(const DynamicNet& net, const Matrix& seq) {
  return detail::run_dynamic(net, seq).logits;
}

inline Vector forward_dynamic(const DynamicNet& net, const DynamicFeatureSequence& seq) {
  if (seq.empty()) throw Error(ErrorCode::EmptySequence, "forward_dynamic");
  return forward_dynamic(net, to_matrix(seq));
}

/// Final hidden states of both directions, [h_fwd ; h_bwd].
inline Vector final_states(const DynamicNet& net, const Matrix& seq) {
  return detail::run_dynamic(net, seq).features;
}

inline Vector forward(const StaticNet& net, const Vector& x) { return forward_static(net, x); }
inline Vector forward(const DynamicNet& net, const Matrix& seq) { return forward_dynamic(net, seq); }

// ------------------------------------------------------------------ softmax

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<double> softmax(const Vector& logits) {
  return softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

inline std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

inline std::size_t argmax(const Vector& values) {
  Eigen::Index i = 0;
  values.maxCoeff(&i);
  return static_cast<std::size_t>(i);
}

/// Post-softmax boost of the "none" class: its probability is multiplied by
/// k before renormalization.
struct CalibrationConfig {
  std::size_t none_index = 0;
  double k = 2.0;
};

inline CalibrationConfig calibration_for(std::span<const std::string> labels, double k) {
  auto it = std::find(labels.begin(), labels.end(), kNoneLabel);
  if (it == labels.end()) throw Error(ErrorCode::UnknownLabel, "label set has no 'none' class");
  if (!(k >= 1.0)) throw Error(ErrorCode::InvalidArgument, "calibration k must be >= 1");
  return {static_cast<std::size_t>(it - labels.begin()), k};
}

struct CalibratedPrediction {
  std::vector<double> probabilities;
  std::size_t index = 0;

  double confidence() const { return probabilities[index]; }
};

inline CalibratedPrediction calibrated_softmax(std::span<const double> logits,
                                               const CalibrationConfig& cal) {
  CalibratedPrediction out;
  out.probabilities = softmax(logits);
  auto& p = out.probabilities;
  if (cal.none_index < p.size()) p[cal.none_index] *= cal.k;
  // Argmax on the scaled, unnormalized values: the non-none entries are
  // untouched there, so their relative order cannot change with k.
  out.index = argmax(p);
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= sum;
  return out;
}

inline CalibratedPrediction calibrated_softmax(const Vector& logits, const CalibrationConfig& cal) {
  return calibrated_softmax(
      std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())), cal);
}

// ------------------------------------------------------------ loss/backward

/// -log softmax(logits)[label]
inline double cross_entropy(const Vector& logits, std::size_t label) {
  const double peak = logits.maxCoeff();
  const double lse = peak + std::log((logits.array() - peak).exp().sum());
  return lse - logits(static_cast<Eigen::Index>(label));
}

namespace detail {

inline Vector cross_entropy_grad(const Vector& logits, std::size_t label) {
  const auto p = softmax(logits);
  Vector d = to_vector(p);
  d(static_cast<Eigen::Index>(label)) -= 1.0;
  return d;
}

}  // namespace detail

/// Cross-entropy of one sample; adds its parameter gradient into `grad`.
inline double loss_and_gradient(const StaticNet& net, const Vector& x, std::size_t label,
                                StaticNet& grad) {
  if (x.size() != net.input_size()) throw Error(ErrorCode::DimensionMismatch, "static input");
  const Vector pre = net.hidden.forward(x);
  const Vector act = pre.cwiseMax(0.0);
  const Vector logits = net.output.forward(act);
  const Vector dlogits = detail::cross_entropy_grad(logits, label);

  grad.output.weight.noalias() += dlogits * act.transpose();
  grad.output.bias += dlogits;
  Vector dpre = net.output.weight.transpose() * dlogits;
  for (Eigen::Index i = 0; i < dpre.size(); ++i) {
    if (pre(i) <= 0.0) dpre(i) = 0.0;
  }
  grad.hidden.weight.noalias() += dpre * x.transpose();
  grad.hidden.bias += dpre;
  return cross_entropy(logits, label);
}

inline double loss_and_gradient(const DynamicNet& net, const Matrix& seq, std::size_t label,
                                DynamicNet& grad) {
  const auto tr = detail::run_dynamic(net, seq);
  const Vector dlogits = detail::cross_entropy_grad(tr.logits, label);
  grad.head.weight.noalias() += dlogits * tr.features.transpose();
  grad.head.bias += dlogits;

  const Eigen::Index g = net.forward_gru.hidden();
  const Vector dfeatures = net.head.weight.transpose() * dlogits;
  Matrix dencoded = Matrix::Zero(tr.encoded.rows(), tr.encoded.cols());
  detail::backprop_gru(net.forward_gru, tr.fwd, tr.encoded, false, dfeatures.segment(0, g),
                       grad.forward_gru, dencoded);
  detail::backprop_gru(net.backward_gru, tr.bwd, tr.encoded, true, dfeatures.segment(g, g),
                       grad.backward_gru, dencoded);

  grad.encoder.weight.noalias() += dencoded * seq;
  grad.encoder.bias += dencoded.rowwise().sum();
  return cross_entropy(tr.logits, label);
}

inline double loss(const StaticNet& net, const Vector& x, std::size_t label) {
  return cross_entropy(forward_static(net, x), label);
}

inline double loss(const DynamicNet& net, const Matrix& seq, std::size_t label) {
  return cross_entropy(forward_dynamic(net, seq), label);
}

// --------------------------------------------------------------- grad check

inline constexpr double kGradCheckStep = 1e-5;

/// Max over all parameters of |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-8),
/// where g_fd is the central difference with step 1e-5.
template <class Net, class Input>
double grad_check(const Net& model, const Input& input, std::size_t label) {
  Net grad = zeros_like(model);
  loss_and_gradient(model, input, label, grad);

  Net probe = model;
  auto params = parameters(probe);
  auto grads = parameters(grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + kGradCheckStep;
      const double up = loss(probe, input, label);
      params[k][i] = saved - kGradCheckStep;
      const double down = loss(probe, input, label);
      params[k][i] = saved;
      const double fd = (up - down) / (2.0 * kGradCheckStep);
      const double bp = grads[k][i];
      const double denom = std::max({std::abs(bp), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(bp - fd) / denom);
    }
  }
  return worst;
}

// ----------------------------------------------------------------- training

enum class Optimizer { SGD, Adam };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;            // mean training cross-entropy during the epoch
  double train_accuracy = 0.0;  // measured after the epoch
  std::optional<double> val_accuracy;
};

template <class Net>
struct TrainResult {
  Net model;
  std::vector<EpochMetrics> history;
};

template <class Input>
struct LabeledSet {
  std::span<const Input> inputs;
  std::span<const std::size_t> labels;

  std::size_t size() const { return inputs.size(); }
};

template <class Net, class Input>
std::size_t predict(const Net& net, const Input& input) {
  return argmax(forward(net, input));
}

template <class Net, class Input>
double accuracy(const Net& net, const LabeledSet<Input>& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(net, data.inputs[i]) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace detail {

inline Eigen::Index input_width(const Vector& x) { return x.size(); }
inline Eigen::Index input_width(const Matrix& m) { return m.cols(); }
inline bool input_empty(const Vector&) { return false; }
inline bool input_empty(const Matrix& m) { return m.rows() == 0; }

template <class Net, class Input>
void validate_training_data(const Net& net, const LabeledSet<Input>& data) {
  if (data.inputs.size() != data.labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "inputs and labels differ in length");
  }
  std::set<std::size_t> classes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (input_width(data.inputs[i]) != net.input_size()) {
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(i));
    }
    if (input_empty(data.inputs[i])) throw Error(ErrorCode::EmptySequence, "sample " + std::to_string(i));
    if (data.labels[i] >= static_cast<std::size_t>(net.class_count())) {
      throw Error(ErrorCode::InvalidArgument, "label index out of range at sample " + std::to_string(i));
    }
    classes.insert(data.labels[i]);
  }
  if (classes.size() < 2) throw Error(ErrorCode::SingleClassData, "need at least two classes");
}

class AdamState {
 public:
  explicit AdamState(const std::vector<std::span<double>>& params) {
    for (auto p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads,
            double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double g = grads[k][i];
        m_[k][i] = kBeta1 * m_[k][i] + (1.0 - kBeta1) * g;
        v_[k][i] = kBeta2 * v_[k][i] + (1.0 - kBeta2) * g * g;
        params[k][i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + kEps);
      }
    }
  }

 private:
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace detail

/// Mini-batch training on mean cross-entropy. Deterministic: the shuffle
/// order depends only on cfg.seed.
template <class Net, class Input>
TrainResult<Net> train(Net model, const LabeledSet<Input>& data, const TrainConfig& cfg,
                       const std::optional<LabeledSet<Input>>& validation = std::nullopt,
                       const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (cfg.epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  detail::validate_training_data(model, data);
  if (validation) detail::validate_training_data(model, *validation);

  TrainResult<Net> result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto params = parameters(model);
  Net grad = zeros_like(model);
  auto grads = parameters(grad);
  detail::AdamState adam(params);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        total += loss_and_gradient(model, data.inputs[i], data.labels[i], grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto g : grads) {
        for (double& v : g) v *= scale;
      }
      if (cfg.optimizer == Optimizer::Adam) {
        adam.step(params, grads, cfg.learning_rate);
      } else {
        for (std::size_t k = 0; k < params.size(); ++k) {
          for (std::size_t j = 0; j < params[k].size(); ++j) params[k][j] -= cfg.learning_rate * grads[k][j];
        }
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = total / static_cast<double>(data.size());
    m.train_accuracy = accuracy(model, data);
    if (validation) m.val_accuracy = accuracy(model, *validation);
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace gestop::nn
