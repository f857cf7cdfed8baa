/**
 * @file sim.hpp
 *
 * Deterministic discrete-time flight simulation.
 *
 * The drone is a planar double integrator with linear drag, driven by body-frame
 * acceleration commands, plus first-order lags on vertical velocity and yaw rate.
 * The person follows a seeded waypoint script or is posed externally. Every
 * random draw comes from the generator carried inside WorldState, so stepping is
 * a pure function of the state value.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "proxquad/world.hpp"

namespace proxquad {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from (base, stream).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct SimParams {
  double dt = 1.0 / 30.0;
  double drag_k = 0.3;             ///< [1/s]
  double tau_vz = 0.3;             ///< [s]
  double tau_yaw = 0.2;            ///< [s]
  double arena_half_extent = 3.5;  ///< 7 x 7 m flying area
  double floor_z = 0.3;
  double ceiling_z = 3.0;
  double odom_rate_hz = 0.0;       ///< 0: odometry refreshed every tick; otherwise sample-and-hold

  void validate() const {
    if (!(dt > 0.0 && drag_k >= 0.0 && tau_vz > 0.0 && tau_yaw > 0.0 && arena_half_extent > 0.0 &&
          ceiling_z > floor_z && odom_rate_hz >= 0.0))
      throw ConfigError("sim: invalid parameters");
  }
};

struct DroneState {
  Pose3 pose;
  Vec3 vel;  ///< world frame
  double yaw_rate = 0.0;
  friend bool operator==(const DroneState&, const DroneState&) = default;
};

struct PersonProfile {
  double eye_height = 1.7;
  double head_size_factor = 1.0;  ///< apparent-size confound, [0.85, 1.15]
  double aggressiveness = 0.5;    ///< [0, 1]
  std::uint64_t seed = 0;
  friend bool operator==(const PersonProfile&, const PersonProfile&) = default;
};

enum class PersonMotion { Still, RandomWalk, External };

/// Script state of the waypoint random walk.
struct PersonScript {
  PersonMotion motion = PersonMotion::Still;
  double bound = 3.0;  ///< waypoints and positions stay within [-bound, bound]^2
  double waypoint_x = 0.0;
  double waypoint_y = 0.0;
  double speed = 0.0;
  double target_heading = 0.0;
  double dwell_left = 0.0;
  friend bool operator==(const PersonScript&, const PersonScript&) = default;
};

struct PersonState {
  Pose3 pose;  ///< z = eye level
  Vec3 vel;    ///< planar, z always 0
  PersonProfile profile;
  PersonScript script;
  friend bool operator==(const PersonState&, const PersonState&) = default;
};

struct WorldState {
  DroneState drone;
  PersonState person;
  double t = 0.0;
  std::int64_t tick = 0;
  Rng person_rng{0};
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Drone planar velocity expressed in its own body frame.
inline Odometry body_odometry(const DroneState& drone) {
  const Vec3 b = rotate_z(drone.vel, -drone.pose.heading);
  return {b.x, b.y};
}

/// Head pose of the person relative to the drone body frame.
inline HeadState relative_head_state(const WorldState& world) {
  return relative_head_state(world.drone.pose, world.person.pose);
}

// ------------------------------------------------------------------
// Person motion
// ------------------------------------------------------------------

namespace detail {

inline double slew_angle(double from, double to, double max_step) {
  const double diff = wrap_angle(to - from);
  return wrap_angle(from + std::clamp(diff, -max_step, max_step));
}

inline void resample_leg(PersonState& p, double aggr, Rng& rng) {
  auto& s = p.script;
  s.waypoint_x = uniform(rng, -s.bound, s.bound);
  s.waypoint_y = uniform(rng, -s.bound, s.bound);
  s.speed = uniform(rng, 0.3, 0.6 + 1.4 * aggr);
  s.dwell_left = uniform(rng, 0.2, 0.5 + 3.0 * (1.0 - aggr));
  const double travel = std::atan2(s.waypoint_y - p.pose.y, s.waypoint_x - p.pose.x);
  // Half of the legs are walked facing the direction of travel.
  s.target_heading = uniform(rng, 0.0, 1.0) < 0.5 ? wrap_angle(travel) : uniform(rng, -kPi, kPi);
}

}  // namespace detail

/**
 * Advances a person by one tick.
 *
 * Random walk: walk to a waypoint at the leg speed, dwell, resample. Effective
 * aggressiveness ramps from half to full over the first minute (cautious start),
 * and scales walking speed, dwell time, turn rate and the rate of sudden turn
 * bursts. Aggressiveness 0 degenerates to standing still.
 *
 * When `drone` is given the person will not step closer to it than
 * kPersonalSpace; they wait until it backs off.
 */
inline constexpr double kPersonalSpace = 0.8;  // [m]

inline PersonState person_motion_step(PersonState person, double t, double dt, Rng& rng,
                                      std::optional<Vec3> drone = std::nullopt) {
  if (!(dt > 0.0)) throw DomainError("person_motion_step: dt must be > 0");
  auto& s = person.script;
  if (s.motion == PersonMotion::External) return person;
  const double aggr = std::clamp(person.profile.aggressiveness, 0.0, 1.0) * std::min(1.0, 0.5 + t / 60.0);
  if (s.motion == PersonMotion::Still || aggr <= 0.0) {
    person.vel = {};
    return person;
  }

  const double dx = s.waypoint_x - person.pose.x;
  const double dy = s.waypoint_y - person.pose.y;
  const double dist = std::hypot(dx, dy);
  if (dist < 0.05) {
    person.vel = {};
    s.dwell_left -= dt;
    if (s.dwell_left <= 0.0) detail::resample_leg(person, aggr, rng);
  } else {
    const double step = std::min(s.speed * dt, dist);
    const double nx = person.pose.x + dx / dist * step;
    const double ny = person.pose.y + dy / dist * step;
    const bool blocked = drone && std::hypot(nx - drone->x, ny - drone->y) < kPersonalSpace &&
                         std::hypot(nx - drone->x, ny - drone->y) < std::hypot(person.pose.x - drone->x, person.pose.y - drone->y);
    if (blocked) {
      person.vel = {};
    } else {
      person.pose.x = nx;
      person.pose.y = ny;
      person.vel = {dx / dist * step / dt, dy / dist * step / dt, 0.0};
    }
  }

  const double burst_rate = 0.3 + 1.0 * aggr;  // [1/s]
  if (uniform(rng, 0.0, 1.0) < burst_rate * dt)
    s.target_heading = wrap_angle(person.pose.heading + uniform(rng, -kPi, kPi));
  const double turn_rate = 0.5 + 1.5 * aggr;  // [rad/s]
  person.pose.heading = detail::slew_angle(person.pose.heading, s.target_heading, turn_rate * dt);

  person.pose.x = std::clamp(person.pose.x, -s.bound, s.bound);
  person.pose.y = std::clamp(person.pose.y, -s.bound, s.bound);
  return person;
}

// ------------------------------------------------------------------
// Drone dynamics
// ------------------------------------------------------------------

/// Semi-implicit Euler step of the whole world.
inline WorldState step(WorldState world, const Control& u, const SimParams& params) {
  const double dt = params.dt;
  DroneState& d = world.drone;

  const Vec3 acc = rotate_z({u.u_ax, u.u_ay, 0.0}, d.pose.heading);
  d.vel.x += (acc.x - params.drag_k * d.vel.x) * dt;
  d.vel.y += (acc.y - params.drag_k * d.vel.y) * dt;
  d.vel.z = u.u_vz + (d.vel.z - u.u_vz) * std::exp(-dt / params.tau_vz);
  d.yaw_rate = u.u_wz + (d.yaw_rate - u.u_wz) * std::exp(-dt / params.tau_yaw);

  d.pose.x += d.vel.x * dt;
  d.pose.y += d.vel.y * dt;
  d.pose.z += d.vel.z * dt;
  d.pose.heading = wrap_angle(d.pose.heading + d.yaw_rate * dt);

  // The net stops the drone; velocity into a wall is dropped.
  const double h = params.arena_half_extent;
  auto clip = [](double& pos, double& vel, double lo, double hi) {
    if (pos < lo) {
      pos = lo;
      vel = std::max(vel, 0.0);
    } else if (pos > hi) {
      pos = hi;
      vel = std::min(vel, 0.0);
    }
  };
  clip(d.pose.x, d.vel.x, -h, h);
  clip(d.pose.y, d.vel.y, -h, h);
  clip(d.pose.z, d.vel.z, params.floor_z, params.ceiling_z);

  world.person = person_motion_step(world.person, world.t, dt, world.person_rng, d.pose.position());
  ++world.tick;
  world.t = static_cast<double>(world.tick) * dt;
  return world;
}

/// Odometry channel with optional sample-and-hold at a lower rate.
class OdometrySensor {
 public:
  explicit OdometrySensor(double rate_hz = 0.0) : rate_hz_(rate_hz) {}

  Odometry read(const WorldState& world) {
    if (rate_hz_ <= 0.0) return body_odometry(world.drone);
    if (!held_ || world.t + 1e-9 >= next_sample_t_) {
      held_ = body_odometry(world.drone);
      next_sample_t_ = world.t + 1.0 / rate_hz_;
    }
    return *held_;
  }

 private:
  double rate_hz_;
  std::optional<Odometry> held_;
  double next_sample_t_ = 0.0;
};

// ------------------------------------------------------------------
// Scenarios
// ------------------------------------------------------------------

enum class ScenarioKind { Approach90, Approach45, Approach0, Still, Scripted };

struct Scenario {
  ScenarioKind kind = ScenarioKind::Still;
  double aggressiveness = 0.5;  ///< Scripted only

  std::string name() const {
    switch (kind) {
      case ScenarioKind::Approach90: return "approach_90";
      case ScenarioKind::Approach45: return "approach_45";
      case ScenarioKind::Approach0: return "approach_0";
      case ScenarioKind::Still: return "still";
      case ScenarioKind::Scripted: return "scripted:" + std::to_string(aggressiveness);
    }
    return "?";
  }
};

/// Parses "approach_90" | "approach_45" | "approach_0" | "still" | "scripted[:aggr]".
inline Scenario parse_scenario(std::string_view name) {
  if (name == "approach_90") return {ScenarioKind::Approach90};
  if (name == "approach_45") return {ScenarioKind::Approach45};
  if (name == "approach_0") return {ScenarioKind::Approach0};
  if (name == "still") return {ScenarioKind::Still};
  if (name.starts_with("scripted")) {
    Scenario s{ScenarioKind::Scripted, 0.5};
    if (name.size() > 8) {
      if (name[8] != ':') throw ConfigError("unknown scenario: " + std::string(name));
      try {
        std::size_t used = 0;
        const std::string arg(name.substr(9));
        s.aggressiveness = std::stod(arg, &used);
        if (used != arg.size()) throw ConfigError("bad aggressiveness");
      } catch (const std::exception&) {
        throw ConfigError("unknown scenario: " + std::string(name));
      }
      if (!(s.aggressiveness >= 0.0 && s.aggressiveness <= 1.0))
        throw ConfigError("scenario aggressiveness must be in [0, 1]");
    }
    return s;
  }
  throw ConfigError("unknown scenario: " + std::string(name));
}

inline constexpr double kScenarioEyeHeight = 1.7;
inline constexpr double kScenarioStartDistance = 3.0;
inline constexpr double kScenarioStartAltitude = 1.5;

/**
 * Initial world for a scenario. Approach scenarios put a still person at the arena
 * centre and the drone 3 m away on -x, facing the person; the person faces
 * 0/45/90 degrees away from the drone. The seed jitters the drone start slightly.
 * `still` starts the drone exactly at its target pose.
 */
inline WorldState make_scenario(const Scenario& scenario, std::uint64_t seed, const SimParams& params = {},
                                double standoff = 1.5) {
  WorldState w;
  w.person_rng.seed(derive_seed(seed, 11));
  Rng jitter(derive_seed(seed, 12));

  PersonState& p = w.person;
  p.profile.eye_height = kScenarioEyeHeight;
  p.profile.seed = seed;
  p.pose = {0.0, 0.0, kScenarioEyeHeight, kPi};
  p.script.bound = params.arena_half_extent - 0.5;

  DroneState& d = w.drone;
  d.pose = {-kScenarioStartDistance, 0.0, kScenarioStartAltitude, 0.0};

  switch (scenario.kind) {
    case ScenarioKind::Approach90:
    case ScenarioKind::Approach45:
    case ScenarioKind::Approach0: {
      const double rel = scenario.kind == ScenarioKind::Approach90   ? kPi / 2
                         : scenario.kind == ScenarioKind::Approach45 ? kPi / 4
                                                                     : 0.0;
      p.pose.heading = wrap_angle(kPi + rel);
      d.pose.x += uniform(jitter, -0.1, 0.1);
      d.pose.y += uniform(jitter, -0.1, 0.1);
      d.pose.heading = wrap_angle(uniform(jitter, -0.05, 0.05));
      break;
    }
    case ScenarioKind::Still: {
      const Vec3 target = p.pose.position() + standoff * unit_heading(p.pose.heading);
      d.pose = {target.x, target.y, kScenarioEyeHeight, wrap_angle(p.pose.heading - kPi)};
      break;
    }
    case ScenarioKind::Scripted: {
      p.profile.aggressiveness = scenario.aggressiveness;
      p.script.motion = PersonMotion::RandomWalk;
      p.pose.heading = wrap_angle(uniform(jitter, -kPi, kPi));
      const Vec3 target = p.pose.position() + standoff * unit_heading(p.pose.heading);
      d.pose = {target.x, target.y, kScenarioEyeHeight, wrap_angle(p.pose.heading - kPi)};
      p.script.waypoint_x = p.pose.x;
      p.script.waypoint_y = p.pose.y;
      p.script.target_heading = p.pose.heading;
      break;
    }
  }
  return w;
}

}  // namespace proxquad
