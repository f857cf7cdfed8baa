/**
 * @file camera.hpp
 *
 * Virtual camera: a low-dimensional stand-in for the image a forward-pointing
 * camera would deliver. Bearing and elevation of the head are cheap to observe;
 * distance only reaches the observer through apparent size (confounded by the
 * person's head size) and the facing angle only through a weak, noisy cue that
 * fades with distance.
 */

#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "proxquad/sim.hpp"

namespace proxquad {

struct NoiseParams {
  double sigma_u = 0.01;
  double sigma_v = 0.14;
  double sigma_size_rel = 0.02;
  double sigma_face_cue = 0.1;
  double distance_noise_gain = 0.25;  ///< [1/m]

  NoiseParams& off() {
    sigma_u = sigma_v = sigma_size_rel = sigma_face_cue = 0.0;
    return *this;
  }
};

struct CameraParams {
  double hfov = 1.57;
  double vfov = 1.0;
  double mount_pitch = 0.0;
  NoiseParams noise;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(hfov > 0.0 && hfov < kPi && vfov > 0.0 && vfov < kPi)) throw ConfigError("camera: fov out of (0, pi)");
    if (!(noise.sigma_u >= 0 && noise.sigma_v >= 0 && noise.sigma_size_rel >= 0 && noise.sigma_face_cue >= 0 &&
          noise.distance_noise_gain >= 0))
      throw ConfigError("camera: noise parameters must be >= 0");
  }
};

inline constexpr double kNominalHeadSize = 0.25;  ///< [m]
inline constexpr double kMinVisibleDepth = 0.1;   ///< [m]

struct ImageFeatures {
  double u = 0.0;
  double v = 0.0;
  double size = 0.0;
  double face_cos = 0.0;
  double face_sin = 0.0;
  double visible = 0.0;

  std::array<double, 6> as_array() const { return {u, v, size, face_cos, face_sin, visible}; }
  static ImageFeatures from_array(const std::array<double, 6>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
  friend bool operator==(const ImageFeatures&, const ImageFeatures&) = default;
};

constexpr int features_dim() { return 6; }

/// Observes the head given its pose in the body frame.
inline ImageFeatures observe_head(const HeadState& s, double head_size_factor, const CameraParams& cam, Rng& rng) {
  const double planar = std::hypot(s.s_x, s.s_y);
  const double dist = norm(s.position());
  const double bearing = std::atan2(s.s_y, s.s_x);
  const double elevation = std::atan2(s.s_z, planar) - cam.mount_pitch;
  const double u = bearing / (cam.hfov / 2.0);
  const double v = elevation / (cam.vfov / 2.0);
  if (!(s.s_x > kMinVisibleDepth && std::abs(u) <= 1.0 && std::abs(v) <= 1.0)) return {};

  const NoiseParams& n = cam.noise;
  const double scale = 1.0 + n.distance_noise_gain * dist;
  std::normal_distribution<double> gauss(0.0, 1.0);

  ImageFeatures f;
  f.visible = 1.0;
  f.u = std::clamp(u + n.sigma_u * gauss(rng), -1.0, 1.0);
  f.v = std::clamp(v + n.sigma_v * gauss(rng), -1.0, 1.0);
  f.size = head_size_factor * kNominalHeadSize / dist * (1.0 + n.sigma_size_rel * scale * gauss(rng));
  f.face_cos = std::cos(s.s_theta) / scale + n.sigma_face_cue * scale * gauss(rng);
  f.face_sin = std::sin(s.s_theta) / scale + n.sigma_face_cue * scale * gauss(rng);
  return f;
}

inline ImageFeatures observe(const WorldState& world, const CameraParams& cam, Rng& rng) {
  return observe_head(relative_head_state(world), world.person.profile.head_size_factor, cam, rng);
}

}  // namespace proxquad
