/**
 * @file nn.hpp
 *
 * Dense feed-forward regression: relu hidden layers, linear output, mean
 * absolute error loss, ADAM, learning rate reduction on validation plateau and
 * early stopping with best-weights restoration.
 *
 * Batches are column-major: one sample per column.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "proxquad/sim.hpp"

namespace proxquad::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Activation { Relu };

struct MLPSpec {
  int input_dim = 1;
  std::vector<int> hidden{256, 128};
  int output_dim = 1;
  Activation activation = Activation::Relu;

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw ConfigError("mlp: dims must be >= 1");
    for (int h : hidden)
      if (h < 1) throw ConfigError("mlp: hidden widths must be >= 1");
  }
  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

struct Layer {
  Matrix weight;  ///< out x in
  Vector bias;    ///< out
};

/// Affine input/output standardization around the network. Empty vectors mean identity.
struct Standardization {
  Vector in_mean, in_scale, out_mean, out_scale;
  bool empty() const { return in_mean.size() == 0; }
};

struct MLPModel {
  MLPSpec spec;
  std::vector<Layer> layers;
  Standardization norm;
};

/// Per-layer gradients, same shapes as MLPModel::layers.
struct Gradients {
  std::vector<Layer> layers;
};

struct TrainConfig {
  double lr_init = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int plateau_patience_epochs = 5;
  double plateau_factor = 0.5;
  int early_stop_patience = 10;
  int max_epochs = 200;
  int batch_size = 64;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train: plateau_factor in (0,1)");
    if (plateau_patience_epochs < 1 || early_stop_patience < 1) throw ConfigError("train: patiences >= 1");
    if (max_epochs < 0 || batch_size < 1 || !(lr_init > 0.0)) throw ConfigError("train: invalid epochs/batch/lr");
  }
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> lr;  ///< learning rate in effect during each epoch
  TrainConfig config;
  friend bool operator==(const TrainReport& a, const TrainReport& b) {
    return a.epochs_run == b.epochs_run && a.best_epoch == b.best_epoch &&
           a.best_validation_loss == b.best_validation_loss && a.train_loss == b.train_loss &&
           a.validation_loss == b.validation_loss && a.lr == b.lr;
  }
};

/// A supervised set: X is input_dim x N, Y is output_dim x N.
struct Dataset {
  Matrix X;
  Matrix Y;
  Eigen::Index size() const { return X.cols(); }
};

// ------------------------------------------------------------------
// Model construction and evaluation
// ------------------------------------------------------------------

/// Glorot-uniform weights, zero biases.
inline MLPModel init_model(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  MLPModel m{spec, {}, {}};
  Rng rng(seed);
  int fan_in = spec.input_dim;
  std::vector<int> widths = spec.hidden;
  widths.push_back(spec.output_dim);
  for (int fan_out : widths) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer l{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) l.weight(r, c) = dist(rng);
    m.layers.push_back(std::move(l));
    fan_in = fan_out;
  }
  return m;
}

inline Matrix normalize_inputs(const MLPModel& m, const Matrix& X) {
  if (m.norm.empty()) return X;
  return (X.colwise() - m.norm.in_mean).array().colwise() / m.norm.in_scale.array();
}

inline Matrix normalize_targets(const MLPModel& m, const Matrix& Y) {
  if (m.norm.empty()) return Y;
  return (Y.colwise() - m.norm.out_mean).array().colwise() / m.norm.out_scale.array();
}

inline Matrix denormalize_outputs(const MLPModel& m, Matrix Y) {
  if (m.norm.empty()) return Y;
  Y.array().colwise() *= m.norm.out_scale.array();
  Y.colwise() += m.norm.out_mean;
  return Y;
}

/// Raw network on already-normalized inputs.
inline Matrix forward_network(const MLPModel& m, const Matrix& X) {
  Matrix a = X;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    Matrix z = m.layers[i].weight * a;
    z.colwise() += m.layers[i].bias;
    if (i + 1 < m.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

/// Model outputs for a batch of raw inputs (columns).
inline Matrix forward_batch(const MLPModel& m, const Matrix& X) {
  if (X.rows() != m.spec.input_dim) throw ShapeError("forward: input dimension mismatch");
  return denormalize_outputs(m, forward_network(m, normalize_inputs(m, X)));
}

inline Vector forward(const MLPModel& m, const Vector& x) {
  if (x.size() != m.spec.input_dim) throw ShapeError("forward: input dimension mismatch");
  return forward_batch(m, x).col(0);
}

/// Mean over all elements of |pred - target|.
inline double mae_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("mae_loss: shape mismatch");
  if (pred.size() == 0) throw ShapeError("mae_loss: empty batch");
  return (pred - target).cwiseAbs().mean();
}

namespace detail {
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace detail

/**
 * Exact subgradient of the MAE between the raw network output on X and Y
 * (both in the network's normalized space). relu'(0) = 0 and sign(0) = 0.
 * Returns the loss through `loss` when given.
 */
inline Gradients backward(const MLPModel& m, const Matrix& X, const Matrix& Y, double* loss = nullptr) {
  if (X.rows() != m.spec.input_dim || Y.rows() != m.spec.output_dim || X.cols() != Y.cols() || X.cols() == 0)
    throw ShapeError("backward: batch shape mismatch");
  const std::size_t L = m.layers.size();
  std::vector<Matrix> acts;  // input to layer i
  std::vector<Matrix> pre;   // pre-activation of layer i
  acts.reserve(L);
  pre.reserve(L);
  acts.push_back(X);
  for (std::size_t i = 0; i < L; ++i) {
    Matrix z = m.layers[i].weight * acts.back();
    z.colwise() += m.layers[i].bias;
    pre.push_back(z);
    if (i + 1 < L) acts.push_back(z.cwiseMax(0.0));
  }
  const Matrix diff = pre.back() - Y;
  if (loss) *loss = diff.cwiseAbs().mean();

  Gradients g;
  g.layers.resize(L);
  Matrix delta = diff.unaryExpr(&detail::sign) / static_cast<double>(diff.size());
  for (std::size_t k = L; k-- > 0;) {
    g.layers[k].weight = delta * acts[k].transpose();
    g.layers[k].bias = delta.rowwise().sum();
    if (k > 0) {
      Matrix back = m.layers[k].weight.transpose() * delta;
      delta = back.cwiseProduct((pre[k - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

// ------------------------------------------------------------------
// ADAM
// ------------------------------------------------------------------

struct AdamState {
  std::vector<Layer> m;
  std::vector<Layer> v;

  static AdamState zeros_like(const MLPModel& model) {
    AdamState s;
    for (const auto& l : model.layers) {
      s.m.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
      s.v.push_back(s.m.back());
    }
    return s;
  }
};

namespace detail {
template <typename P, typename G>
void adam_update(P& param, const G& grad, P& m, P& v, double lr, double b1, double b2, double eps, double c1,
                 double c2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}
}  // namespace detail

/// Bias-corrected ADAM update for step index t >= 1 with learning rate lr.
inline void adam_step(MLPModel& model, const Gradients& grads, AdamState& state, long t, double lr,
                      const TrainConfig& cfg) {
  if (t < 1) throw DomainError("adam_step: t must be >= 1");
  if (grads.layers.size() != model.layers.size() || state.m.size() != model.layers.size())
    throw ShapeError("adam_step: layer count mismatch");
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& l = model.layers[i];
    const auto& g = grads.layers[i];
    if (g.weight.rows() != l.weight.rows() || g.weight.cols() != l.weight.cols() || g.bias.size() != l.bias.size())
      throw ShapeError("adam_step: gradient shape mismatch");
    detail::adam_update(l.weight, g.weight, state.m[i].weight, state.v[i].weight, lr, cfg.adam_beta1,
                        cfg.adam_beta2, cfg.adam_eps, c1, c2);
    detail::adam_update(l.bias, g.bias, state.m[i].bias, state.v[i].bias, lr, cfg.adam_beta1, cfg.adam_beta2,
                        cfg.adam_eps, c1, c2);
  }
}

// ------------------------------------------------------------------
// Training
// ------------------------------------------------------------------

/// Fits the standardization of `model` to a training set (per-dimension mean and std; std floor 1e-6).
inline void fit_standardization(MLPModel& model, const Dataset& data) {
  // Constant columns (e.g. the visibility flag in a small sample) keep unit scale.
  auto stats = [](const Matrix& M, Vector& mean, Vector& scale) {
    mean = M.rowwise().mean();
    scale = ((M.colwise() - mean).array().square().rowwise().sum() / static_cast<double>(M.cols())).sqrt().matrix();
    for (Eigen::Index i = 0; i < scale.size(); ++i)
      if (!(scale(i) > 1e-9)) scale(i) = 1.0;
  };
  stats(data.X, model.norm.in_mean, model.norm.in_scale);
  stats(data.Y, model.norm.out_mean, model.norm.out_scale);
}

/// MAE of the model on a dataset, measured in the network's normalized target space.
inline double validation_loss(const MLPModel& model, const Dataset& data) {
  const Matrix pred = forward_network(model, normalize_inputs(model, data.X));
  return mae_loss(pred, normalize_targets(model, data.Y));
}

struct TrainResult {
  MLPModel model;
  TrainReport report;
};

/**
 * Mini-batch ADAM with per-epoch shuffling derived from cfg.seed. The learning
 * rate is multiplied by plateau_factor after plateau_patience_epochs epochs
 * without a validation improvement larger than min_delta; training stops after
 * early_stop_patience such epochs or at max_epochs. Returns the parameters with
 * the lowest validation loss seen.
 */
inline TrainResult train(MLPModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw ConfigError("train: empty dataset");
  if (train_set.X.rows() != model.spec.input_dim || val_set.X.rows() != model.spec.input_dim ||
      train_set.Y.rows() != model.spec.output_dim || val_set.Y.rows() != model.spec.output_dim ||
      train_set.Y.cols() != train_set.X.cols() || val_set.Y.cols() != val_set.X.cols())
    throw ShapeError("train: dataset dimensions do not match the model");

  TrainReport report;
  report.config = cfg;
  TrainResult best{model, {}};

  const Matrix X = normalize_inputs(model, train_set.X);
  const Matrix Y = normalize_targets(model, train_set.Y);
  const Matrix Xv = normalize_inputs(model, val_set.X);
  const Matrix Yv = normalize_targets(model, val_set.Y);
  const Eigen::Index n = X.cols();

  AdamState adam = AdamState::zeros_like(model);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double lr = cfg.lr_init;
  double reference = std::numeric_limits<double>::infinity();
  int plateau_wait = 0;
  int stop_wait = 0;
  long t = 0;
  Matrix bx, by;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      bx.resize(X.rows(), len);
      by.resize(Y.rows(), len);
      for (Eigen::Index j = 0; j < len; ++j) {
        bx.col(j) = X.col(order[static_cast<std::size_t>(start + j)]);
        by.col(j) = Y.col(order[static_cast<std::size_t>(start + j)]);
      }
      double batch_loss = 0.0;
      const Gradients g = backward(model, bx, by, &batch_loss);
      adam_step(model, g, adam, ++t, lr, cfg);
      loss_sum += batch_loss * static_cast<double>(len);
    }

    const double val = mae_loss(forward_network(model, Xv), Yv);
    report.train_loss.push_back(loss_sum / static_cast<double>(n));
    report.validation_loss.push_back(val);
    report.lr.push_back(lr);
    report.epochs_run = epoch + 1;

    if (val < report.best_validation_loss) {
      report.best_validation_loss = val;
      report.best_epoch = epoch;
      best.model = model;
    }
    if (val < reference - cfg.min_delta) {
      reference = val;
      plateau_wait = 0;
      stop_wait = 0;
    } else {
      ++plateau_wait;
      ++stop_wait;
      if (stop_wait >= cfg.early_stop_patience) break;
      if (plateau_wait >= cfg.plateau_patience_epochs) {
        lr *= cfg.plateau_factor;
        plateau_wait = 0;
      }
    }
  }
  best.report = std::move(report);
  return best;
}

}  // namespace proxquad::nn
