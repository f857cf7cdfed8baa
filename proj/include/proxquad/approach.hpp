/**
 * @file approach.hpp
 *
 * The three ways of turning camera features and odometry into commands:
 *
 *   A1 (mediated):                 u = f_C(m1(im), odom)
 *   A2 (end-to-end):               u = m2(im, odom)
 *   A3 (mediated, learned control): u = m3(m1(im), odom)
 *
 * plus GroundTruth, the designed controller fed with the true head pose.
 */

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "proxquad/controller.hpp"
#include "proxquad/dataset.hpp"
#include "proxquad/nn.hpp"

namespace proxquad {

enum class ApproachKind { A1, A2, A3, GroundTruth };

inline constexpr std::array<ApproachKind, 3> kLearnedApproaches{ApproachKind::A1, ApproachKind::A2,
                                                                ApproachKind::A3};

inline std::string to_string(ApproachKind k) {
  switch (k) {
    case ApproachKind::A1: return "a1";
    case ApproachKind::A2: return "a2";
    case ApproachKind::A3: return "a3";
    case ApproachKind::GroundTruth: return "gt";
  }
  return "?";
}

inline ApproachKind parse_approach(std::string_view s) {
  if (s == "a1" || s == "A1") return ApproachKind::A1;
  if (s == "a2" || s == "A2") return ApproachKind::A2;
  if (s == "a3" || s == "A3") return ApproachKind::A3;
  if (s == "gt" || s == "groundtruth" || s == "GroundTruth") return ApproachKind::GroundTruth;
  throw ConfigError("unknown approach: " + std::string(s));
}

/// Raised when an approach is used without the models it needs.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct TrainedApproach {
  ApproachKind kind = ApproachKind::GroundTruth;
  std::optional<nn::MLPModel> m1;  ///< im -> s_pose
  std::optional<nn::MLPModel> m2;  ///< im + odom -> u
  std::optional<nn::MLPModel> m3;  ///< s_pose estimate + odom -> u
  ControllerParams params;
  std::vector<nn::TrainReport> reports;

  void check() const {
    const bool ok = (kind == ApproachKind::A1 && m1 && !m2 && !m3) || (kind == ApproachKind::A2 && !m1 && m2 && !m3) ||
                    (kind == ApproachKind::A3 && m1 && !m2 && m3) ||
                    (kind == ApproachKind::GroundTruth && !m1 && !m2 && !m3);
    if (!ok) throw ContractError("approach " + to_string(kind) + " has the wrong set of models");
  }
};

// ------------------------------------------------------------------
// Model inputs
// ------------------------------------------------------------------

inline constexpr int kPoseDim = 4;
inline constexpr int kM1OutputDim = 5;  ///< s_x, s_y, s_z, cos s_theta, sin s_theta
inline constexpr int kControlDim = 4;

inline nn::Vector m1_input(const ImageFeatures& im) {
  const auto a = im.as_array();
  return Eigen::Map<const nn::Vector>(a.data(), features_dim());
}

inline nn::Vector m2_input(const ImageFeatures& im, const Odometry& odom) {
  nn::Vector x(features_dim() + 2);
  x << m1_input(im), odom.v_x, odom.v_y;
  return x;
}

inline nn::Vector m3_input(const HeadState& s, const Odometry& odom) {
  nn::Vector x(kPoseDim + 2);
  x << s.s_x, s.s_y, s.s_z, s.s_theta, odom.v_x, odom.v_y;
  return x;
}

/// Decodes an M1 output; the angle is regressed as (cos, sin) so that it has no seam at +-pi.
inline HeadState head_from_vector(const nn::Vector& v) {
  const double c = v(3);
  const double s = v(4);
  return {v(0), v(1), v(2), (c == 0.0 && s == 0.0) ? 0.0 : wrap_angle(std::atan2(s, c))};
}

inline Control control_from_vector(const nn::Vector& v) { return {v(0), v(1), v(2), v(3)}; }

inline nn::Vector pose_vector(const HeadState& s) {
  return nn::Vector{{s.s_x, s.s_y, s.s_z, std::cos(s.s_theta), std::sin(s.s_theta)}};
}
inline nn::Vector control_vector(const Control& u) { return nn::Vector{{u.u_ax, u.u_ay, u.u_vz, u.u_wz}}; }

// ------------------------------------------------------------------
// Prediction
// ------------------------------------------------------------------

/// Un-clamped command of an approach; `true_s` is only read by GroundTruth.
inline Control predict_control_raw(const TrainedApproach& app, const ImageFeatures& im, const Odometry& odom,
                                   const std::optional<HeadState>& true_s = std::nullopt) {
  switch (app.kind) {
    case ApproachKind::GroundTruth:
      if (!true_s) throw ContractError("GroundTruth needs the true head state");
      return compute_control({*true_s, odom}, app.params);
    case ApproachKind::A1:
      if (!app.m1) throw ContractError("A1 needs m1");
      return compute_control({head_from_vector(nn::forward(*app.m1, m1_input(im))), odom}, app.params);
    case ApproachKind::A2:
      if (!app.m2) throw ContractError("A2 needs m2");
      return control_from_vector(nn::forward(*app.m2, m2_input(im, odom)));
    case ApproachKind::A3:
      if (!app.m1 || !app.m3) throw ContractError("A3 needs m1 and m3");
      return control_from_vector(
          nn::forward(*app.m3, m3_input(head_from_vector(nn::forward(*app.m1, m1_input(im))), odom)));
  }
  throw ContractError("unknown approach");
}

/// Command sent to the drone: learned outputs are clamped to the controller's envelope.
inline Control predict_control(const TrainedApproach& app, const ImageFeatures& im, const Odometry& odom,
                               const std::optional<HeadState>& true_s = std::nullopt) {
  return clamp_to_limits(predict_control_raw(app, im, odom, true_s), app.params);
}

/// Batched raw predictions over instances (GroundTruth uses each instance's s_pose).
inline std::vector<Control> predict_controls_raw(const TrainedApproach& app, const std::vector<DataInstance>& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<Control> out(data.size());
  auto estimate_heads = [&]() {
    nn::Matrix X(features_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) X.col(i) = m1_input(data[static_cast<std::size_t>(i)].im);
    const nn::Matrix S = nn::forward_batch(*app.m1, X);
    std::vector<HeadState> heads(data.size());
    for (Eigen::Index i = 0; i < n; ++i) heads[static_cast<std::size_t>(i)] = head_from_vector(S.col(i));
    return heads;
  };
  switch (app.kind) {
    case ApproachKind::GroundTruth:
      for (std::size_t i = 0; i < data.size(); ++i) out[i] = compute_control({data[i].s_pose, data[i].odom}, app.params);
      break;
    case ApproachKind::A1: {
      if (!app.m1) throw ContractError("A1 needs m1");
      const auto heads = estimate_heads();
      for (std::size_t i = 0; i < data.size(); ++i) out[i] = compute_control({heads[i], data[i].odom}, app.params);
      break;
    }
    case ApproachKind::A2: {
      if (!app.m2) throw ContractError("A2 needs m2");
      nn::Matrix X(features_dim() + 2, n);
      for (Eigen::Index i = 0; i < n; ++i)
        X.col(i) = m2_input(data[static_cast<std::size_t>(i)].im, data[static_cast<std::size_t>(i)].odom);
      const nn::Matrix U = nn::forward_batch(*app.m2, X);
      for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = control_from_vector(U.col(i));
      break;
    }
    case ApproachKind::A3: {
      if (!app.m1 || !app.m3) throw ContractError("A3 needs m1 and m3");
      const auto heads = estimate_heads();
      nn::Matrix X(kPoseDim + 2, n);
      for (Eigen::Index i = 0; i < n; ++i)
        X.col(i) = m3_input(heads[static_cast<std::size_t>(i)], data[static_cast<std::size_t>(i)].odom);
      const nn::Matrix U = nn::forward_batch(*app.m3, X);
      for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = control_from_vector(U.col(i));
      break;
    }
  }
  return out;
}

// ------------------------------------------------------------------
// Training
// ------------------------------------------------------------------

/// Supervised sets for each model role. M1 never sees control labels; M2 never sees s_pose.
inline nn::Dataset m1_dataset(const std::vector<DataInstance>& data) {
  nn::Dataset d{nn::Matrix(features_dim(), static_cast<Eigen::Index>(data.size())),
                nn::Matrix(kM1OutputDim, static_cast<Eigen::Index>(data.size()))};
  for (std::size_t i = 0; i < data.size(); ++i) {
    d.X.col(static_cast<Eigen::Index>(i)) = m1_input(data[i].im);
    d.Y.col(static_cast<Eigen::Index>(i)) = pose_vector(data[i].s_pose);
  }
  return d;
}

inline nn::Dataset m2_dataset(const std::vector<DataInstance>& data) {
  nn::Dataset d{nn::Matrix(features_dim() + 2, static_cast<Eigen::Index>(data.size())),
                nn::Matrix(kControlDim, static_cast<Eigen::Index>(data.size()))};
  for (std::size_t i = 0; i < data.size(); ++i) {
    d.X.col(static_cast<Eigen::Index>(i)) = m2_input(data[i].im, data[i].odom);
    d.Y.col(static_cast<Eigen::Index>(i)) = control_vector(data[i].u);
  }
  return d;
}

/// M3 inputs are M1's estimates, so M3 learns the controller on the state it will actually see.
inline nn::Dataset m3_dataset(const nn::MLPModel& m1, const std::vector<DataInstance>& data) {
  const nn::Dataset s = m1_dataset(data);
  const nn::Matrix S = nn::forward_batch(m1, s.X);
  nn::Dataset d{nn::Matrix(kPoseDim + 2, S.cols()), nn::Matrix(kControlDim, S.cols())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    d.X.col(c) = m3_input(head_from_vector(S.col(c)), data[i].odom);
    d.Y.col(c) = control_vector(data[i].u);
  }
  return d;
}

inline nn::TrainResult fit_model(int input_dim, int output_dim, const nn::Dataset& train_set,
                                 const nn::Dataset& val_set, const nn::TrainConfig& cfg, std::uint64_t seed) {
  nn::MLPModel model = nn::init_model({input_dim, {256, 128}, output_dim}, derive_seed(seed, 1));
  nn::fit_standardization(model, train_set);
  nn::TrainConfig c = cfg;
  c.seed = derive_seed(seed, 2);
  return nn::train(std::move(model), train_set, val_set, c);
}

/// Seeded sample of T training instances, without replacement.
inline std::vector<DataInstance> sample_training(const SessionSet& corpus, int T, std::uint64_t seed) {
  std::vector<DataInstance> pool = corpus.collect(Split::Train);
  if (T < 1 || static_cast<std::size_t>(T) > pool.size())
    throw ConfigError("T = " + std::to_string(T) + " exceeds the " + std::to_string(pool.size()) +
                      " available training instances");
  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(T));
  return pool;
}

namespace detail {
inline constexpr std::uint64_t kStreamM1 = 101;
inline constexpr std::uint64_t kStreamM2 = 102;
inline constexpr std::uint64_t kStreamM3 = 103;
inline constexpr std::uint64_t kStreamSample = 100;
}  // namespace detail

/// Trains one approach on T sampled instances; validation always uses the full validation split.
inline TrainedApproach train_approach(ApproachKind kind, const SessionSet& corpus, int T, const nn::TrainConfig& cfg,
                                      std::uint64_t seed, const ControllerParams& params = {}) {
  TrainedApproach app;
  app.kind = kind;
  app.params = params;
  if (kind == ApproachKind::GroundTruth) return app;

  const auto train = sample_training(corpus, T, derive_seed(seed, detail::kStreamSample));
  const auto val = corpus.collect(Split::Validation);
  if (val.empty()) throw ConfigError("corpus has no validation instances");

  if (kind == ApproachKind::A2) {
    auto r = fit_model(features_dim() + 2, kControlDim, m2_dataset(train), m2_dataset(val), cfg,
                       derive_seed(seed, detail::kStreamM2));
    app.m2 = std::move(r.model);
    app.reports.push_back(std::move(r.report));
    return app;
  }
  auto r1 = fit_model(features_dim(), kM1OutputDim, m1_dataset(train), m1_dataset(val), cfg,
                      derive_seed(seed, detail::kStreamM1));
  app.m1 = std::move(r1.model);
  app.reports.push_back(std::move(r1.report));
  if (kind == ApproachKind::A3) {
    auto r3 = fit_model(kPoseDim + 2, kControlDim, m3_dataset(*app.m1, train), m3_dataset(*app.m1, val), cfg,
                        derive_seed(seed, detail::kStreamM3));
    app.m3 = std::move(r3.model);
    app.reports.push_back(std::move(r3.report));
  }
  return app;
}

/// A1, A2 and A3 for the same (T, seed). A1 and A3 share one M1, exactly as separate train_approach calls would produce.
inline std::array<TrainedApproach, 3> train_all_approaches(const SessionSet& corpus, int T, const nn::TrainConfig& cfg,
                                                           std::uint64_t seed, const ControllerParams& params = {}) {
  const auto train = sample_training(corpus, T, derive_seed(seed, detail::kStreamSample));
  const auto val = corpus.collect(Split::Validation);
  if (val.empty()) throw ConfigError("corpus has no validation instances");

  auto r1 = fit_model(features_dim(), kM1OutputDim, m1_dataset(train), m1_dataset(val), cfg,
                      derive_seed(seed, detail::kStreamM1));
  auto r2 = fit_model(features_dim() + 2, kControlDim, m2_dataset(train), m2_dataset(val), cfg,
                      derive_seed(seed, detail::kStreamM2));
  auto r3 = fit_model(kPoseDim + 2, kControlDim, m3_dataset(r1.model, train), m3_dataset(r1.model, val), cfg,
                      derive_seed(seed, detail::kStreamM3));

  std::array<TrainedApproach, 3> out;
  out[0] = {ApproachKind::A1, r1.model, std::nullopt, std::nullopt, params, {r1.report}};
  out[1] = {ApproachKind::A2, std::nullopt, r2.model, std::nullopt, params, {r2.report}};
  out[2] = {ApproachKind::A3, r1.model, std::nullopt, r3.model, params, {r1.report, r3.report}};
  return out;
}

}  // namespace proxquad
