/**
 * @file world.hpp
 *
 * Frames, poses and angle arithmetic shared by the whole workbench.
 *
 * Conventions:
 *   - World frame: x/y on the floor, z up, heading measured counter-clockwise from +x.
 *   - Drone body frame: x forward (camera axis), y left, z up.
 *   - Angles in radians, stored wrapped to (-pi, pi].
 *   - SI units throughout.
 */

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace proxquad {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Raised when a numeric argument is outside an operation's domain.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised by azimuth() when the planar part of a vector is too short to define a direction.
struct DegenerateAzimuth : DomainError {
  DegenerateAzimuth() : DomainError("degenerate azimuth") {}
};

/// Raised for invalid configuration values (counts, ranges, names).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------
// Vec3
// ------------------------------------------------------------------

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline Vec3 operator*(const Vec3& v, double s) { return s * v; }

inline double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }
inline double planar_norm(const Vec3& v) { return std::hypot(v.x, v.y); }

/// Rotates the planar part of v by angle a about +z; z is untouched.
inline Vec3 rotate_z(const Vec3& v, double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

// ------------------------------------------------------------------
// Angles and clamps
// ------------------------------------------------------------------

/// Maps a finite angle to its representative in (-pi, pi].
inline double wrap_angle(double a) {
  if (!std::isfinite(a)) throw DomainError("wrap_angle: non-finite angle");
  double r = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// e(a) = (cos a, sin a, 0).
inline Vec3 unit_heading(double a) {
  if (!std::isfinite(a)) throw DomainError("unit_heading: non-finite angle");
  return {std::cos(a), std::sin(a), 0.0};
}

/// Planar angle of p in (-pi, pi]. Throws DegenerateAzimuth when ||(p.x, p.y)|| < eps or is zero.
inline double azimuth(const Vec3& p, double eps = 0.0) {
  const double r = planar_norm(p);
  if (!(r > 0.0) || r < eps) throw DegenerateAzimuth();
  return wrap_angle(std::atan2(p.y, p.x));
}

/// min(max(v, -limit), limit); limit must be strictly positive.
inline double clamp_sym(double v, double limit) {
  if (!(limit > 0.0)) throw DomainError("clamp_sym: limit must be > 0");
  return v < -limit ? -limit : (v > limit ? limit : v);
}

// ------------------------------------------------------------------
// State types
// ------------------------------------------------------------------

struct Pose3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double heading = 0.0;  ///< yaw, wrapped to (-pi, pi]

  Vec3 position() const { return {x, y, z}; }
  friend bool operator==(const Pose3&, const Pose3&) = default;
};

inline Pose3 make_pose(const Vec3& p, double heading) { return {p.x, p.y, p.z, wrap_angle(heading)}; }

/// Pose of the user's head in the drone body frame. s_theta = 0 when the face points along body -x.
struct HeadState {
  double s_x = 0.0;
  double s_y = 0.0;
  double s_z = 0.0;
  double s_theta = 0.0;

  Vec3 position() const { return {s_x, s_y, s_z}; }
  friend bool operator==(const HeadState&, const HeadState&) = default;
};

/// Drone planar velocity in the body frame.
struct Odometry {
  double v_x = 0.0;
  double v_y = 0.0;
  friend bool operator==(const Odometry&, const Odometry&) = default;
};

/// Commanded body accelerations (pitch/roll proxies), vertical velocity and yaw rate.
struct Control {
  double u_ax = 0.0;
  double u_ay = 0.0;
  double u_vz = 0.0;
  double u_wz = 0.0;
  friend bool operator==(const Control&, const Control&) = default;
};

struct FullState {
  HeadState pose;
  Odometry odom;
};

inline constexpr const char* kControlNames[4] = {"u_ax", "u_ay", "u_vz", "u_wz"};

inline double control_component(const Control& u, int i) {
  switch (i) {
    case 0: return u.u_ax;
    case 1: return u.u_ay;
    case 2: return u.u_vz;
    default: return u.u_wz;
  }
}

/// Head pose of `head` (world frame) as seen from the body frame of `drone` (world frame).
inline HeadState relative_head_state(const Pose3& drone, const Pose3& head) {
  const Vec3 offset = rotate_z(head.position() - drone.position(), -drone.heading);
  return {offset.x, offset.y, offset.z, wrap_angle(head.heading - drone.heading - kPi)};
}

}  // namespace proxquad
