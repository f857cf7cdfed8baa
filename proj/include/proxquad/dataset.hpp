/**
 * @file dataset.hpp
 *
 * Simulated acquisition sessions and the session-wise corpus split.
 *
 * During a session the drone is flown by the acquisition controller at a
 * scheduled standoff; each 30 Hz tick records the camera features, odometry,
 * true relative head pose, and the label u = f_C(s_pose, odom) of the designed
 * controller at the nominal standoff. The acquisition command itself is never
 * recorded.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "proxquad/camera.hpp"
#include "proxquad/config.hpp"
#include "proxquad/controller.hpp"
#include "proxquad/sim.hpp"

namespace proxquad {

struct DataInstance {
  int session = 0;
  double t = 0.0;
  ImageFeatures im;
  Odometry odom;
  HeadState s_pose;
  Control u;
  friend bool operator==(const DataInstance&, const DataInstance&) = default;
};

enum class Split : std::uint8_t { Train, Validation, Test };

struct Session {
  int id = 0;
  PersonProfile profile;
  std::uint64_t seed = 0;
  std::vector<DataInstance> instances;
};

struct SessionSet {
  std::vector<Session> sessions;
  std::vector<std::vector<Split>> split;  ///< split[session index][instance index]

  /// Instances with the given role, in session order.
  std::vector<DataInstance> collect(Split role) const {
    std::vector<DataInstance> out;
    for (std::size_t s = 0; s < sessions.size(); ++s)
      for (std::size_t i = 0; i < sessions[s].instances.size(); ++i)
        if (split[s][i] == role) out.push_back(sessions[s].instances[i]);
    return out;
  }

  std::size_t count(Split role) const {
    std::size_t n = 0;
    for (const auto& v : split) n += static_cast<std::size_t>(std::count(v.begin(), v.end(), role));
    return n;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.instances.size();
    return n;
  }

  bool is_test_session(std::size_t s) const {
    return !split[s].empty() && split[s].front() == Split::Test;
  }
};

/// Simulation, camera and controller settings shared by everything that flies.
struct FlightContext {
  SimParams sim;
  CameraParams camera;
  ControllerParams controller;
};

inline FlightContext flight_context(const WorkbenchConfig& c) { return {c.sim, c.camera, c.controller}; }

// ------------------------------------------------------------------
// Acquisition schedule
// ------------------------------------------------------------------

struct StandoffSegment {
  double t_start = 0.0;
  double standoff = 1.5;
  double eye_offset = 0.0;
};

/// Piecewise-constant acquisition schedule.
struct StandoffSchedule {
  std::vector<StandoffSegment> segments;

  const StandoffSegment& at(double t) const {
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](double v, const StandoffSegment& s) { return v < s.t_start; });
    return it == segments.begin() ? segments.front() : *(it - 1);
  }
};

inline StandoffSchedule make_standoff_schedule(double duration, const CorpusRecipe& recipe, std::uint64_t seed) {
  Rng rng(seed);
  StandoffSchedule s;
  for (double t = 0.0; t < duration; t += recipe.standoff_period) {
    const double standoff = uniform(rng, recipe.standoff_min, recipe.standoff_max);
    const double offset = recipe.eye_offset_max > 0.0 ? uniform(rng, -recipe.eye_offset_max, recipe.eye_offset_max) : 0.0;
    s.segments.push_back({t, standoff, offset});
  }
  return s;
}

/// Users range from 160 to 197 cm; eye level sits about 11 cm below the top of the head.
inline PersonProfile sample_profile(std::uint64_t seed, double aggressiveness_min = 0.3,
                                    double aggressiveness_max = 1.0) {
  Rng rng(seed);
  PersonProfile p;
  p.eye_height = uniform(rng, 1.60, 1.97) - 0.11;
  p.head_size_factor = uniform(rng, 0.85, 1.15);
  p.aggressiveness = uniform(rng, aggressiveness_min, aggressiveness_max);
  p.seed = seed;
  return p;
}

// ------------------------------------------------------------------
// Sessions
// ------------------------------------------------------------------

inline std::vector<DataInstance> generate_session(const PersonProfile& profile, double duration,
                                                  const StandoffSchedule& schedule, std::uint64_t seed,
                                                  const FlightContext& ctx, int session_id = 0) {
  if (!(duration > 0.0)) throw ConfigError("generate_session: duration must be > 0");
  if (schedule.segments.empty()) throw ConfigError("generate_session: empty standoff schedule");
  for (const auto& seg : schedule.segments)
    if (!(seg.standoff >= 1.0 && seg.standoff <= 2.0)) throw ConfigError("generate_session: standoff outside [1, 2]");

  const SimParams& sim = ctx.sim;
  WorldState world;
  world.person_rng.seed(derive_seed(seed, 1));
  Rng camera_rng(derive_seed(seed, 2));
  Rng init_rng(derive_seed(seed, 3));

  PersonState& p = world.person;
  p.profile = profile;
  p.script.motion = PersonMotion::RandomWalk;
  p.script.bound = sim.arena_half_extent - 0.5;
  p.pose = {uniform(init_rng, -1.5, 1.5), uniform(init_rng, -1.5, 1.5), profile.eye_height,
            uniform(init_rng, -kPi, kPi)};
  p.script.waypoint_x = p.pose.x;
  p.script.waypoint_y = p.pose.y;
  p.script.target_heading = p.pose.heading;

  const StandoffSegment& first = schedule.at(0.0);
  const Vec3 start = p.pose.position() + first.standoff * unit_heading(p.pose.heading);
  world.drone.pose = {std::clamp(start.x, -sim.arena_half_extent, sim.arena_half_extent),
                      std::clamp(start.y, -sim.arena_half_extent, sim.arena_half_extent),
                      profile.eye_height - first.eye_offset, wrap_angle(p.pose.heading - kPi)};

  OdometrySensor odometry(sim.odom_rate_hz);
  const auto ticks = static_cast<std::size_t>(std::llround(duration / sim.dt));
  std::vector<DataInstance> out;
  out.reserve(ticks);
  for (std::size_t k = 0; k < ticks; ++k) {
    DataInstance d;
    d.session = session_id;
    d.t = world.t;
    d.s_pose = relative_head_state(world);
    d.odom = odometry.read(world);
    d.im = observe(world, ctx.camera, camera_rng);
    d.u = compute_control({d.s_pose, d.odom}, ctx.controller);
    out.push_back(d);

    const StandoffSegment& seg = schedule.at(world.t);
    const Control acq =
        compute_acq_control(world.drone.pose, world.person.pose, d.odom, seg.standoff, ctx.controller, seg.eye_offset);
    world = step(std::move(world), acq, sim);
  }
  return out;
}

/**
 * Generates `recipe.sessions` sessions with distinct profiles, holds out
 * `recipe.test_sessions` whole sessions (seeded choice) as the test set and
 * splits the remaining instances uniformly at random into train/validation.
 */
inline SessionSet build_corpus(const CorpusRecipe& recipe, std::uint64_t seed, const FlightContext& ctx) {
  recipe.validate();
  SessionSet set;
  for (int s = 0; s < recipe.sessions; ++s) {
    Session session;
    session.id = s;
    session.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(s));
    session.profile = sample_profile(derive_seed(session.seed, 7), recipe.aggressiveness_min, recipe.aggressiveness_max);
    const StandoffSchedule schedule =
        make_standoff_schedule(recipe.session_duration, recipe, derive_seed(session.seed, 8));
    session.instances = generate_session(session.profile, recipe.session_duration, schedule, session.seed, ctx, s);
    set.sessions.push_back(std::move(session));
  }

  std::vector<int> order(static_cast<std::size_t>(recipe.sessions));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, 2000));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<bool> is_test(order.size(), false);
  for (int i = 0; i < recipe.test_sessions; ++i) is_test[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  std::vector<std::pair<std::size_t, std::size_t>> pool;
  set.split.resize(set.sessions.size());
  for (std::size_t s = 0; s < set.sessions.size(); ++s) {
    set.split[s].assign(set.sessions[s].instances.size(), is_test[s] ? Split::Test : Split::Train);
    if (!is_test[s])
      for (std::size_t i = 0; i < set.sessions[s].instances.size(); ++i) pool.emplace_back(s, i);
  }
  std::shuffle(pool.begin(), pool.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::floor(recipe.validation_fraction * static_cast<double>(pool.size())));
  for (std::size_t k = 0; k < n_val; ++k) set.split[pool[k].first][pool[k].second] = Split::Validation;
  return set;
}

// ------------------------------------------------------------------
// On-disk format
// ------------------------------------------------------------------

inline json to_json(const PersonProfile& p) {
  return {{"eye_height", p.eye_height},
          {"head_size_factor", p.head_size_factor},
          {"aggressiveness", p.aggressiveness},
          {"seed", p.seed}};
}
inline PersonProfile profile_from_json(const json& j) {
  return {j.at("eye_height").get<double>(), j.at("head_size_factor").get<double>(),
          j.at("aggressiveness").get<double>(), j.at("seed").get<std::uint64_t>()};
}

/// One flat record: {session, t, im:[6], odom:[2], s_pose:[4], u:[4]}.
inline json to_json(const DataInstance& d) {
  const auto im = d.im.as_array();
  return {{"session", d.session},
          {"t", d.t},
          {"im", std::vector<double>(im.begin(), im.end())},
          {"odom", {d.odom.v_x, d.odom.v_y}},
          {"s_pose", {d.s_pose.s_x, d.s_pose.s_y, d.s_pose.s_z, d.s_pose.s_theta}},
          {"u", {d.u.u_ax, d.u.u_ay, d.u.u_vz, d.u.u_wz}}};
}

inline DataInstance instance_from_json(const json& j) {
  DataInstance d;
  d.session = j.at("session").get<int>();
  d.t = j.at("t").get<double>();
  const auto im = j.at("im").get<std::vector<double>>();
  const auto odom = j.at("odom").get<std::vector<double>>();
  const auto s = j.at("s_pose").get<std::vector<double>>();
  const auto u = j.at("u").get<std::vector<double>>();
  if (im.size() != static_cast<std::size_t>(features_dim()) || odom.size() != 2 || s.size() != 4 || u.size() != 4)
    throw ConfigError("dataset record: wrong array length");
  d.im = ImageFeatures::from_array({im[0], im[1], im[2], im[3], im[4], im[5]});
  d.odom = {odom[0], odom[1]};
  d.s_pose = {s[0], s[1], s[2], s[3]};
  d.u = {u[0], u[1], u[2], u[3]};
  return d;
}

inline std::string session_file_name(int id) {
  std::string n = std::to_string(id);
  return "session_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n + ".jsonl";
}

/// First line is a header record ({"kind": "header", ...}); the rest are instance records.
inline void write_session_file(const std::filesystem::path& path, const Session& s, const std::string& cfg_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  json header = {{"kind", "header"},
                 {"config_hash", cfg_hash},
                 {"session", s.id},
                 {"seed", s.seed},
                 {"profile", to_json(s.profile)},
                 {"instances", s.instances.size()}};
  out << header.dump() << '\n';
  for (const auto& d : s.instances) out << to_json(d).dump() << '\n';
  if (!out) throw ConfigError("write failed: " + path.string());
}

struct SessionFile {
  json header;
  std::vector<DataInstance> instances;
};

inline SessionFile read_session_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  SessionFile f;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.contains("kind")) {
      f.header = std::move(j);
      continue;
    }
    f.instances.push_back(instance_from_json(j));
  }
  return f;
}

inline constexpr const char* kManifestName = "manifest.json";

inline json make_manifest(const SessionSet& set, const WorkbenchConfig& cfg) {
  json sessions = json::array();
  for (std::size_t s = 0; s < set.sessions.size(); ++s) {
    const Session& ses = set.sessions[s];
    std::vector<std::size_t> val;
    for (std::size_t i = 0; i < set.split[s].size(); ++i)
      if (set.split[s][i] == Split::Validation) val.push_back(i);
    sessions.push_back({{"id", ses.id},
                        {"file", session_file_name(ses.id)},
                        {"seed", ses.seed},
                        {"profile", to_json(ses.profile)},
                        {"instances", ses.instances.size()},
                        {"role", set.is_test_session(s) ? "test" : "trainval"},
                        {"validation", val}});
  }
  // The corpus is the same wherever it is written.
  json config = to_json(cfg);
  config.erase("output_dir");
  return {{"kind", "manifest"},
          {"config_hash", config_hash(cfg)},
          {"seed", cfg.seed},
          {"config", config},
          {"sessions", sessions}};
}

inline void write_corpus(const std::filesystem::path& dir, const SessionSet& set, const WorkbenchConfig& cfg) {
  std::filesystem::create_directories(dir);
  const std::string hash = config_hash(cfg);
  for (const auto& s : set.sessions) write_session_file(dir / session_file_name(s.id), s, hash);
  std::ofstream out(dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest in " + dir.string());
  out << make_manifest(set, cfg).dump(2) << '\n';
}

inline json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw ConfigError("missing corpus manifest in " + dir.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

inline SessionSet read_corpus(const std::filesystem::path& dir) {
  const json manifest = read_manifest(dir);
  SessionSet set;
  for (const auto& entry : manifest.at("sessions")) {
    Session s;
    s.id = entry.at("id").get<int>();
    s.seed = entry.at("seed").get<std::uint64_t>();
    s.profile = profile_from_json(entry.at("profile"));
    s.instances = read_session_file(dir / entry.at("file").get<std::string>()).instances;
    const bool test = entry.at("role").get<std::string>() == "test";
    std::vector<Split> split(s.instances.size(), test ? Split::Test : Split::Train);
    for (auto i : entry.at("validation").get<std::vector<std::size_t>>()) {
      if (i >= split.size()) throw ConfigError("manifest: validation index out of range");
      split[i] = Split::Validation;
    }
    set.sessions.push_back(std::move(s));
    set.split.push_back(std::move(split));
  }
  return set;
}

}  // namespace proxquad
