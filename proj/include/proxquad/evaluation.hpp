/**
 * @file evaluation.hpp
 *
 * R^2 of predicted commands against labels, and closed-loop rollouts with
 * settle-time and smoothness metrics.
 */

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "proxquad/approach.hpp"
#include "proxquad/camera.hpp"
#include "proxquad/dataset.hpp"
#include "proxquad/sim.hpp"

namespace proxquad {

/// Raised when R^2 is undefined (constant target or too few samples).
struct UndefinedR2 : DomainError {
  UndefinedR2() : DomainError("undefined R2") {}
};

/// 1 - SS_res / SS_tot, SS_tot taken about the mean of y.
inline double r_squared(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw DomainError("r_squared: length mismatch");
  if (y.size() < 2) throw UndefinedR2();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_tot += (y[i] - mean) * (y[i] - mean);
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  }
  if (!(ss_tot > 0.0)) throw UndefinedR2();
  return 1.0 - ss_res / ss_tot;
}

struct R2Report {
  std::array<double, 4> r2{};  ///< u_ax, u_ay, u_vz, u_wz
  std::size_t samples = 0;
};

/// R^2 per control component of the approach's raw (pre-clamp) commands on labelled instances.
inline R2Report evaluate_approach(const TrainedApproach& app, const std::vector<DataInstance>& test) {
  if (test.empty()) throw ConfigError("evaluate_approach: empty test set");
  const std::vector<Control> pred = predict_controls_raw(app, test);
  R2Report rep;
  rep.samples = test.size();
  std::vector<double> y(test.size()), y_hat(test.size());
  for (int c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < test.size(); ++i) {
      y[i] = control_component(test[i].u, c);
      y_hat[i] = control_component(pred[i], c);
    }
    rep.r2[static_cast<std::size_t>(c)] = r_squared(y, y_hat);
  }
  return rep;
}

// ------------------------------------------------------------------
// Closed loop
// ------------------------------------------------------------------

/// A person pose injected at simulated time t (the live bridge and scripted replays use this).
struct TimedPersonPose {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

struct TraceSample {
  double t = 0.0;
  Pose3 drone;
  Vec3 drone_vel;
  Pose3 person;
  Control u;  ///< command actuated on this tick
  HeadState s_true;
  std::optional<HeadState> s_estimated;
  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

/**
 * One simulated drone + person driven by an approach at the simulator rate.
 *
 * Each tick: apply due person poses, observe, predict, actuate, step. The
 * recorded sample holds the state the command was computed from.
 */
class ClosedLoop {
 public:
  ClosedLoop(WorldState initial, const FlightContext& ctx, std::uint64_t seed)
      : world_(std::move(initial)), ctx_(ctx), camera_rng_(derive_seed(seed, 21)), odometry_(ctx.sim.odom_rate_hz) {}

  const WorldState& world() const { return world_; }
  const FlightContext& context() const { return ctx_; }

  /// Queues a person pose; it takes effect on the first tick at or after pose.t.
  void push_person_pose(const TimedPersonPose& pose) {
    auto it = std::upper_bound(pending_.begin(), pending_.end(), pose.t,
                               [](double t, const TimedPersonPose& p) { return t < p.t; });
    pending_.insert(it, pose);
  }

  TraceSample tick(const TrainedApproach& app) {
    apply_due_poses();
    TraceSample s;
    s.t = world_.t;
    s.drone = world_.drone.pose;
    s.drone_vel = world_.drone.vel;
    s.person = world_.person.pose;
    s.s_true = relative_head_state(world_);
    const Odometry odom = odometry_.read(world_);
    const ImageFeatures im = observe(world_, ctx_.camera, camera_rng_);
    if (app.m1) s.s_estimated = head_from_vector(nn::forward(*app.m1, m1_input(im)));
    s.u = predict_control(app, im, odom, s.s_true);
    world_ = step(std::move(world_), s.u, ctx_.sim);
    return s;
  }

 private:
  void apply_due_poses() {
    std::optional<TimedPersonPose> latest;
    while (!pending_.empty() && pending_.front().t <= world_.t + 1e-9) {
      latest = pending_.front();
      pending_.erase(pending_.begin());
    }
    if (!latest) return;
    PersonState& p = world_.person;
    p.script.motion = PersonMotion::External;
    if (last_pose_ && latest->t > last_pose_->t) {
      const double dt = latest->t - last_pose_->t;
      p.vel = {(latest->x - last_pose_->x) / dt, (latest->y - last_pose_->y) / dt, 0.0};
    } else {
      p.vel = {};
    }
    p.pose.x = latest->x;
    p.pose.y = latest->y;
    p.pose.heading = wrap_angle(latest->heading);
    last_pose_ = latest;
  }

  WorldState world_;
  FlightContext ctx_;
  Rng camera_rng_;
  OdometrySensor odometry_;
  std::vector<TimedPersonPose> pending_;
  std::optional<TimedPersonPose> last_pose_;
};

struct RolloutTrace {
  std::string scenario;
  ApproachKind approach = ApproachKind::GroundTruth;
  std::uint64_t seed = 0;
  double dt = 1.0 / 30.0;
  double delta = 1.5;
  std::vector<TraceSample> samples;
};

inline RolloutTrace rollout(const TrainedApproach& app, const Scenario& scenario, double duration, std::uint64_t seed,
                            const FlightContext& ctx, const std::vector<TimedPersonPose>& person_script = {}) {
  app.check();
  ClosedLoop loop(make_scenario(scenario, seed, ctx.sim, ctx.controller.delta), ctx, seed);
  for (const auto& p : person_script) loop.push_person_pose(p);
  RolloutTrace trace{scenario.name(), app.kind, seed, ctx.sim.dt, ctx.controller.delta, {}};
  const auto ticks = static_cast<std::size_t>(std::llround(duration / ctx.sim.dt));
  trace.samples.reserve(ticks);
  for (std::size_t k = 0; k < ticks; ++k) trace.samples.push_back(loop.tick(app));
  return trace;
}

// ------------------------------------------------------------------
// Metrics
// ------------------------------------------------------------------

struct SettleCriterion {
  double position_tol = 0.2;  ///< [m]
  double bearing_tol = 0.1;   ///< [rad]
};

struct RolloutMetrics {
  std::optional<double> settle_time;  ///< empty: did not settle
  double final_position_error = 0.0;
  double path_length = 0.0;
  double mean_abs_jerk = 0.0;
};

/// World-frame hover target: delta in front of the person's face, at eye level.
inline Vec3 world_target(const Pose3& person, double delta) {
  return person.position() + delta * unit_heading(person.heading);
}

inline double position_error(const TraceSample& s, double delta) {
  return norm(world_target(s.person, delta) - s.drone.position());
}

/// Bearing of the user in the drone body frame.
inline double bearing_error(const TraceSample& s) {
  const Vec3 rel = rotate_z(s.person.position() - s.drone.position(), -s.drone.heading);
  return std::atan2(rel.y, rel.x);
}

inline bool within(const TraceSample& s, double delta, const SettleCriterion& c) {
  return position_error(s, delta) < c.position_tol && std::abs(bearing_error(s)) < c.bearing_tol;
}

/// Jerk is the second finite difference of the recorded velocity.
inline RolloutMetrics rollout_metrics(const RolloutTrace& trace, const SettleCriterion& criterion = {}) {
  const auto& s = trace.samples;
  if (s.size() < 2) throw DomainError("rollout_metrics: degenerate trace");
  RolloutMetrics m;
  std::optional<std::size_t> entered;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (within(s[i], trace.delta, criterion)) {
      if (!entered) entered = i;
    } else {
      entered.reset();
    }
  }
  if (entered) m.settle_time = s[*entered].t - s.front().t;
  m.final_position_error = position_error(s.back(), trace.delta);
  for (std::size_t i = 1; i < s.size(); ++i) m.path_length += norm(s[i].drone.position() - s[i - 1].drone.position());
  if (s.size() >= 3) {
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < s.size(); ++i)
      sum += norm(s[i + 1].drone_vel - 2.0 * s[i].drone_vel + s[i - 1].drone_vel) / (trace.dt * trace.dt);
    m.mean_abs_jerk = sum / static_cast<double>(s.size() - 2);
  }
  return m;
}

// ------------------------------------------------------------------
// Export
// ------------------------------------------------------------------

inline json pose_json(const Pose3& p) { return {{"x", p.x}, {"y", p.y}, {"z", p.z}, {"heading", p.heading}}; }

inline json to_json(const TraceSample& s, ApproachKind approach) {
  json j = {{"t", s.t},
            {"drone", pose_json(s.drone)},
            {"drone_vel", {s.drone_vel.x, s.drone_vel.y, s.drone_vel.z}},
            {"person", pose_json(s.person)},
            {"u", {s.u.u_ax, s.u.u_ay, s.u.u_vz, s.u.u_wz}},
            {"s_pose_true", {s.s_true.s_x, s.s_true.s_y, s.s_true.s_z, s.s_true.s_theta}},
            {"approach", to_string(approach)}};
  if (s.s_estimated) {
    const auto& e = *s.s_estimated;
    j["s_pose_estimated"] = {e.s_x, e.s_y, e.s_z, e.s_theta};
  }
  return j;
}

/// Header line followed by one record per tick.
inline void write_trace(const std::filesystem::path& path, const RolloutTrace& trace, const std::string& cfg_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << json{{"kind", "header"},
              {"config_hash", cfg_hash},
              {"scenario", trace.scenario},
              {"approach", to_string(trace.approach)},
              {"seed", trace.seed},
              {"dt", trace.dt},
              {"delta", trace.delta}}
             .dump()
      << '\n';
  for (const auto& s : trace.samples) out << to_json(s, trace.approach).dump() << '\n';
}

inline std::string metrics_csv_header() {
  return "approach,scenario,seed,settled,settle_time,final_position_error,path_length,mean_abs_jerk";
}

inline std::string metrics_csv_row(const RolloutTrace& trace, const RolloutMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(trace.approach) << ',' << trace.scenario << ',' << trace.seed << ',' << (m.settle_time ? 1 : 0)
     << ',';
  if (m.settle_time) os << *m.settle_time;
  os << ',' << m.final_position_error << ',' << m.path_length << ',' << m.mean_abs_jerk;
  return os.str();
}

}  // namespace proxquad
