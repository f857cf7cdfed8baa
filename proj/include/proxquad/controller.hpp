/**
 * @file controller.hpp
 *
 * Stateless proximity controller: hover at a standoff distance in front of the
 * user's face, at eye level, facing the user.
 *
 *   target   p = (s_x, s_y, s_z) + delta * e(pi + s_theta)
 *   velocity v = clamp(p / (2 tau), v_max)                 (per component)
 *   (u_ax, u_ay) = clamp((v_xy - odom) / tau, a_max)       (per component)
 *   u_vz = v_z
 *   u_wz = clamp(azimuth(p) / tau, w_max)
 */

#pragma once


#include "proxquad/world.hpp"

namespace proxquad {

struct ControllerParams {
  double delta = 1.5;         ///< standoff distance [m]
  double tau = 0.5;           ///< [s]
  double v_max = 1.5;         ///< [m/s]
  double a_max = 1.0;         ///< [m/s^2]
  double w_max = 2.0;         ///< [rad/s]
  double eps_azimuth = 0.05;  ///< below this planar target norm the yaw aims at the user instead [m]

  void validate() const {
    if (!(tau > 0.0 && v_max > 0.0 && a_max > 0.0 && w_max > 0.0 && eps_azimuth > 0.0))
      throw ConfigError("controller: tau, v_max, a_max, w_max, eps_azimuth must be > 0");
    if (!(delta >= 0.0)) throw ConfigError("controller: delta must be >= 0");
  }
};

/// The point `delta` in front of the user's face, body frame.
/// e(pi + theta) is written as -e(theta) so the goal is hit exactly.
inline Vec3 target_point(const HeadState& pose, double delta) {
  return pose.position() - delta * unit_heading(pose.s_theta);
}

inline Control compute_control(const FullState& state, const ControllerParams& params) {
  const Vec3 p = target_point(state.pose, params.delta);
  const double two_tau = 2.0 * params.tau;
  const Vec3 v{clamp_sym(p.x / two_tau, params.v_max), clamp_sym(p.y / two_tau, params.v_max),
               clamp_sym(p.z / two_tau, params.v_max)};

  Control u;
  u.u_ax = clamp_sym((v.x - state.odom.v_x) / params.tau, params.a_max);
  u.u_ay = clamp_sym((v.y - state.odom.v_y) / params.tau, params.a_max);
  u.u_vz = v.z;

  // p vanishes at the goal; there the yaw command looks at the user.
  double bearing = 0.0;
  if (planar_norm(p) >= params.eps_azimuth) {
    bearing = azimuth(p, params.eps_azimuth);
  } else if (planar_norm(state.pose.position()) >= params.eps_azimuth) {
    bearing = azimuth(state.pose.position(), params.eps_azimuth);
  }
  u.u_wz = clamp_sym(bearing / params.tau, params.w_max);
  return u;
}

/// Clamps a (possibly learned) command to the controller's actuation envelope.
inline Control clamp_to_limits(const Control& u, const ControllerParams& params) {
  return {clamp_sym(u.u_ax, params.a_max), clamp_sym(u.u_ay, params.a_max),
          clamp_sym(u.u_vz, params.v_max), clamp_sym(u.u_wz, params.w_max)};
}

/**
 * Acquisition-time controller: same translational law, driven by world-frame
 * poses, with a variable standoff. Yaw tracks the user rather than the target
 * point so that the person stays in the camera frame while being chased.
 *
 * `eye_offset` is the height of the head above the drone that the controller
 * holds at equilibrium (0 = eye level). Varying it during data collection gives
 * the vertical channel something to learn.
 */
inline Control compute_acq_control(const Pose3& drone_pose_world, const Pose3& head_pose_world,
                                   const Odometry& odom, double standoff,
                                   const ControllerParams& params, double eye_offset = 0.0) {
  HeadState s = relative_head_state(drone_pose_world, head_pose_world);
  s.s_z -= eye_offset;
  ControllerParams acq = params;
  acq.delta = standoff;
  Control u = compute_control({s, odom}, acq);
  const double bearing =
      planar_norm(s.position()) >= params.eps_azimuth ? azimuth(s.position(), params.eps_azimuth) : 0.0;
  u.u_wz = clamp_sym(bearing / (0.4 * params.tau), params.w_max);
  return u;
}

}  // namespace proxquad
