/**
 * @file config.hpp
 *
 * Workbench configuration: every tunable of the simulator, camera, controller,
 * corpus recipe, sweep and training, loaded from JSON on top of defaults.
 * A single master seed feeds every random stream.
 */

#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxquad/camera.hpp"
#include "proxquad/controller.hpp"
#include "proxquad/nn.hpp"
#include "proxquad/sim.hpp"

namespace proxquad {

using json = nlohmann::json;

struct CorpusRecipe {
  int sessions = 4;
  int test_sessions = 1;
  double session_duration = 120.0;  ///< [s]
  double validation_fraction = 0.21;
  double standoff_min = 1.0;
  double standoff_max = 2.0;
  double standoff_period = 20.0;  ///< standoff is resampled this often [s]
  double eye_offset_max = 0.3;    ///< acquisition altitude offset range [-max, max] [m]
  double aggressiveness_min = 0.3;
  double aggressiveness_max = 1.0;

  void validate() const {
    if (!(test_sessions >= 1 && test_sessions < sessions)) throw ConfigError("corpus: need 1 <= test < sessions");
    if (!(session_duration > 0.0)) throw ConfigError("corpus: duration must be > 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) throw ConfigError("corpus: bad validation fraction");
    if (!(standoff_min >= 1.0 && standoff_max <= 2.0 && standoff_min <= standoff_max))
      throw ConfigError("corpus: standoff range must lie in [1.0, 2.0]");
    if (!(standoff_period > 0.0 && eye_offset_max >= 0.0)) throw ConfigError("corpus: bad schedule parameters");
    if (!(aggressiveness_min >= 0.0 && aggressiveness_min <= aggressiveness_max && aggressiveness_max <= 1.0))
      throw ConfigError("corpus: aggressiveness range must lie in [0, 1]");
  }
};

struct SweepConfig {
  std::vector<int> T_values{128, 512, 1000, 2000, 5000, 10000, 20000, 50000};
  std::vector<int> replicas{50, 20, 10, 5, 2, 2, 2, 2};

  void validate() const {
    if (T_values.empty() || T_values.size() != replicas.size())
      throw ConfigError("sweep: T_values and replicas must be non-empty and of equal length");
    for (std::size_t i = 0; i < T_values.size(); ++i) {
      if (T_values[i] < 1) throw ConfigError("sweep: T must be >= 1");
      if (replicas[i] < 1 || replicas[i] > 50) throw ConfigError("sweep: replicas must be in [1, 50]");
    }
  }
};

struct WorkbenchConfig {
  SimParams sim;
  CameraParams camera;
  ControllerParams controller;
  CorpusRecipe corpus;
  SweepConfig sweep;
  nn::TrainConfig train;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  void validate() const {
    sim.validate();
    camera.validate();
    controller.validate();
    corpus.validate();
    sweep.validate();
    train.validate();
  }
};

// ------------------------------------------------------------------
// JSON mapping
// ------------------------------------------------------------------

#define PROXQUAD_GET(j, obj, field) obj.field = j.value(#field, obj.field)

inline json to_json(const SimParams& p) {
  return {{"dt", p.dt},           {"drag_k", p.drag_k},   {"tau_vz", p.tau_vz},
          {"tau_yaw", p.tau_yaw}, {"arena_half_extent", p.arena_half_extent},
          {"floor_z", p.floor_z}, {"ceiling_z", p.ceiling_z}, {"odom_rate_hz", p.odom_rate_hz}};
}
inline void from_json(const json& j, SimParams& p) {
  PROXQUAD_GET(j, p, dt);
  PROXQUAD_GET(j, p, drag_k);
  PROXQUAD_GET(j, p, tau_vz);
  PROXQUAD_GET(j, p, tau_yaw);
  PROXQUAD_GET(j, p, arena_half_extent);
  PROXQUAD_GET(j, p, floor_z);
  PROXQUAD_GET(j, p, ceiling_z);
  PROXQUAD_GET(j, p, odom_rate_hz);
}

inline json to_json(const CameraParams& c) {
  return {{"hfov", c.hfov},
          {"vfov", c.vfov},
          {"mount_pitch", c.mount_pitch},
          {"noise",
           {{"sigma_u", c.noise.sigma_u},
            {"sigma_v", c.noise.sigma_v},
            {"sigma_size_rel", c.noise.sigma_size_rel},
            {"sigma_face_cue", c.noise.sigma_face_cue},
            {"distance_noise_gain", c.noise.distance_noise_gain}}}};
}
inline void from_json(const json& j, CameraParams& c) {
  PROXQUAD_GET(j, c, hfov);
  PROXQUAD_GET(j, c, vfov);
  PROXQUAD_GET(j, c, mount_pitch);
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    PROXQUAD_GET(n, c.noise, sigma_u);
    PROXQUAD_GET(n, c.noise, sigma_v);
    PROXQUAD_GET(n, c.noise, sigma_size_rel);
    PROXQUAD_GET(n, c.noise, sigma_face_cue);
    PROXQUAD_GET(n, c.noise, distance_noise_gain);
  }
}

inline json to_json(const ControllerParams& p) {
  return {{"delta", p.delta}, {"tau", p.tau},     {"v_max", p.v_max},
          {"a_max", p.a_max}, {"w_max", p.w_max}, {"eps_azimuth", p.eps_azimuth}};
}
inline void from_json(const json& j, ControllerParams& p) {
  PROXQUAD_GET(j, p, delta);
  PROXQUAD_GET(j, p, tau);
  PROXQUAD_GET(j, p, v_max);
  PROXQUAD_GET(j, p, a_max);
  PROXQUAD_GET(j, p, w_max);
  PROXQUAD_GET(j, p, eps_azimuth);
}

inline json to_json(const CorpusRecipe& r) {
  return {{"sessions", r.sessions},
          {"test_sessions", r.test_sessions},
          {"session_duration", r.session_duration},
          {"validation_fraction", r.validation_fraction},
          {"standoff_min", r.standoff_min},
          {"standoff_max", r.standoff_max},
          {"standoff_period", r.standoff_period},
          {"eye_offset_max", r.eye_offset_max},
          {"aggressiveness_min", r.aggressiveness_min},
          {"aggressiveness_max", r.aggressiveness_max}};
}
inline void from_json(const json& j, CorpusRecipe& r) {
  PROXQUAD_GET(j, r, sessions);
  PROXQUAD_GET(j, r, test_sessions);
  PROXQUAD_GET(j, r, session_duration);
  PROXQUAD_GET(j, r, validation_fraction);
  PROXQUAD_GET(j, r, standoff_min);
  PROXQUAD_GET(j, r, standoff_max);
  PROXQUAD_GET(j, r, standoff_period);
  PROXQUAD_GET(j, r, eye_offset_max);
  PROXQUAD_GET(j, r, aggressiveness_min);
  PROXQUAD_GET(j, r, aggressiveness_max);
}

inline json to_json(const SweepConfig& s) { return {{"T_values", s.T_values}, {"replicas", s.replicas}}; }
inline void from_json(const json& j, SweepConfig& s) {
  PROXQUAD_GET(j, s, T_values);
  PROXQUAD_GET(j, s, replicas);
}

inline json to_json(const nn::TrainConfig& c) {
  return {{"lr_init", c.lr_init},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"plateau_patience_epochs", c.plateau_patience_epochs},
          {"plateau_factor", c.plateau_factor},
          {"early_stop_patience", c.early_stop_patience},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"min_delta", c.min_delta},
          {"seed", c.seed}};
}
inline void from_json(const json& j, nn::TrainConfig& c) {
  PROXQUAD_GET(j, c, lr_init);
  PROXQUAD_GET(j, c, adam_beta1);
  PROXQUAD_GET(j, c, adam_beta2);
  PROXQUAD_GET(j, c, adam_eps);
  PROXQUAD_GET(j, c, plateau_patience_epochs);
  PROXQUAD_GET(j, c, plateau_factor);
  PROXQUAD_GET(j, c, early_stop_patience);
  PROXQUAD_GET(j, c, max_epochs);
  PROXQUAD_GET(j, c, batch_size);
  PROXQUAD_GET(j, c, min_delta);
  PROXQUAD_GET(j, c, seed);
}

inline json to_json(const WorkbenchConfig& c) {
  return {{"sim", to_json(c.sim)},       {"camera", to_json(c.camera)}, {"controller", to_json(c.controller)},
          {"corpus", to_json(c.corpus)}, {"sweep", to_json(c.sweep)},   {"train", to_json(c.train)},
          {"output_dir", c.output_dir},  {"seed", c.seed}};
}
inline void from_json(const json& j, WorkbenchConfig& c) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (j.contains("sim")) from_json(j.at("sim"), c.sim);
  if (j.contains("camera")) from_json(j.at("camera"), c.camera);
  if (j.contains("controller")) from_json(j.at("controller"), c.controller);
  if (j.contains("corpus")) from_json(j.at("corpus"), c.corpus);
  if (j.contains("sweep")) from_json(j.at("sweep"), c.sweep);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  PROXQUAD_GET(j, c, output_dir);
  PROXQUAD_GET(j, c, seed);
}

#undef PROXQUAD_GET

inline WorkbenchConfig config_from_json(const json& j) {
  WorkbenchConfig c;
  try {
    from_json(j, c);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline WorkbenchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

/// Hash of the canonical JSON form of a configuration; where artifacts go does not change it.
inline std::string config_hash(const WorkbenchConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace proxquad
