/**
 * @file bridge.hpp
 *
 * Wire protocol of the live bridge and the per-client session it drives.
 * Nothing here touches the network: a BridgeSession consumes text frames and
 * produces text frames, so it can be exercised directly or behind a socket.
 *
 * Inbound  person_pose{seq, x, y, heading, t}, select_controller{seq, kind},
 *          reset{seq, scenario, seed?}
 * Outbound world_state, status, error; each with its own increasing seq.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "proxquad/approach.hpp"
#include "proxquad/evaluation.hpp"

namespace proxquad::bridge {

struct PersonPose {
  std::uint64_t seq = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double t = 0.0;  ///< episode time at which the pose takes effect [s]
};

struct SelectController {
  std::uint64_t seq = 0;
  ApproachKind kind = ApproachKind::GroundTruth;
};

struct Reset {
  std::uint64_t seq = 0;
  std::string scenario = "still";
  std::optional<std::uint64_t> seed;
};

using Inbound = std::variant<PersonPose, SelectController, Reset>;

inline std::uint64_t seq_of(const Inbound& m) {
  return std::visit([](const auto& v) { return v.seq; }, m);
}

/// A message that could not be accepted. `code` is machine-readable.
struct ProtocolError : std::runtime_error {
  ProtocolError(std::string c, const std::string& what, std::optional<std::uint64_t> s = std::nullopt)
      : std::runtime_error(what), code(std::move(c)), seq(s) {}
  std::string code;
  std::optional<std::uint64_t> seq;
};

namespace detail {

inline double finite_number(const json& j, const char* key, std::optional<std::uint64_t> seq) {
  if (!j.contains(key)) throw ProtocolError("missing_field", std::string("missing field: ") + key, seq);
  const json& v = j.at(key);
  if (!v.is_number()) throw ProtocolError("bad_value", std::string(key) + " must be a number", seq);
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ProtocolError("bad_value", std::string(key) + " must be finite", seq);
  return d;
}

inline std::string string_field(const json& j, const char* key, std::optional<std::uint64_t> seq) {
  if (!j.contains(key)) throw ProtocolError("missing_field", std::string("missing field: ") + key, seq);
  if (!j.at(key).is_string()) throw ProtocolError("bad_value", std::string(key) + " must be a string", seq);
  return j.at(key).get<std::string>();
}

inline std::optional<ApproachKind> approach_from_wire(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "groundtruth" || s == "ground_truth" || s == "gt") return ApproachKind::GroundTruth;
  if (s == "a1") return ApproachKind::A1;
  if (s == "a2") return ApproachKind::A2;
  if (s == "a3") return ApproachKind::A3;
  return std::nullopt;
}

}  // namespace detail

inline std::string wire_name(ApproachKind k) {
  switch (k) {
    case ApproachKind::A1: return "A1";
    case ApproachKind::A2: return "A2";
    case ApproachKind::A3: return "A3";
    case ApproachKind::GroundTruth: return "GroundTruth";
  }
  return "?";
}

/// Parses one inbound frame; throws ProtocolError on anything that is not a valid message.
inline Inbound parse_inbound(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ProtocolError("malformed", "frame is not valid JSON");
  if (!j.is_object()) throw ProtocolError("malformed", "frame must be a JSON object");

  std::optional<std::uint64_t> seq;
  if (j.contains("seq")) {
    const json& s = j.at("seq");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      throw ProtocolError("bad_value", "seq must be a non-negative integer");
    seq = s.get<std::uint64_t>();
  }
  if (!j.contains("type") || !j.at("type").is_string()) throw ProtocolError("missing_field", "missing field: type", seq);
  if (!seq) throw ProtocolError("missing_field", "missing field: seq");
  const std::string type = j.at("type").get<std::string>();

  if (type == "person_pose") {
    return PersonPose{*seq, detail::finite_number(j, "x", seq), detail::finite_number(j, "y", seq),
                      detail::finite_number(j, "heading", seq), detail::finite_number(j, "t", seq)};
  }
  if (type == "select_controller") {
    const std::string kind = detail::string_field(j, "kind", seq);
    const auto k = detail::approach_from_wire(kind);
    if (!k) throw ProtocolError("bad_value", "unknown controller kind: " + kind, seq);
    return SelectController{*seq, *k};
  }
  if (type == "reset") {
    Reset r{*seq, detail::string_field(j, "scenario", seq), std::nullopt};
    if (j.contains("seed") && !j.at("seed").is_null()) {
      const json& s = j.at("seed");
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
        throw ProtocolError("bad_value", "seed must be a non-negative integer", seq);
      r.seed = s.get<std::uint64_t>();
    }
    return r;
  }
  throw ProtocolError("unknown_type", "unknown message type: " + type, seq);
}

inline std::string serialize(const Inbound& m) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        json j;
        if constexpr (std::is_same_v<T, PersonPose>) {
          j = {{"type", "person_pose"}, {"seq", v.seq}, {"x", v.x}, {"y", v.y}, {"heading", v.heading}, {"t", v.t}};
        } else if constexpr (std::is_same_v<T, SelectController>) {
          j = {{"type", "select_controller"}, {"seq", v.seq}, {"kind", wire_name(v.kind)}};
        } else {
          j = {{"type", "reset"}, {"seq", v.seq}, {"scenario", v.scenario}};
          if (v.seed) j["seed"] = *v.seed;
        }
        return j.dump();
      },
      m);
}

// ------------------------------------------------------------------
// Outbound
// ------------------------------------------------------------------

inline json world_state_json(std::uint64_t seq, std::uint64_t episode, std::int64_t tick, const TraceSample& s,
                             ApproachKind controller) {
  json j = {{"type", "world_state"},
            {"seq", seq},
            {"episode", episode},
            {"tick", tick},
            {"t", s.t},
            {"controller", wire_name(controller)},
            {"drone", pose_json(s.drone)},
            {"drone_vel", {s.drone_vel.x, s.drone_vel.y, s.drone_vel.z}},
            {"person", pose_json(s.person)},
            {"u_commanded", {s.u.u_ax, s.u.u_ay, s.u.u_vz, s.u.u_wz}},
            {"s_pose_true", {s.s_true.s_x, s.s_true.s_y, s.s_true.s_z, s.s_true.s_theta}}};
  if (s.s_estimated) {
    const auto& e = *s.s_estimated;
    j["s_pose_estimated"] = {e.s_x, e.s_y, e.s_z, e.s_theta};
  }
  return j;
}

/// Inverse of world_state_json for the fields a trace sample carries.
inline TraceSample trace_sample_from_json(const json& j) {
  auto pose = [](const json& p) {
    return Pose3{p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(), p.at("heading").get<double>()};
  };
  TraceSample s;
  s.t = j.at("t").get<double>();
  s.drone = pose(j.at("drone"));
  const auto v = j.at("drone_vel").get<std::vector<double>>();
  s.drone_vel = {v.at(0), v.at(1), v.at(2)};
  s.person = pose(j.at("person"));
  const auto u = j.at("u_commanded").get<std::vector<double>>();
  s.u = {u.at(0), u.at(1), u.at(2), u.at(3)};
  const auto st = j.at("s_pose_true").get<std::vector<double>>();
  s.s_true = {st.at(0), st.at(1), st.at(2), st.at(3)};
  if (j.contains("s_pose_estimated")) {
    const auto se = j.at("s_pose_estimated").get<std::vector<double>>();
    s.s_estimated = HeadState{se.at(0), se.at(1), se.at(2), se.at(3)};
  }
  return s;
}

inline json status_json(std::uint64_t seq, std::uint64_t episode, double tick_rate, double nominal_rate,
                        ApproachKind controller, const std::vector<ApproachKind>& available, const std::string& scenario) {
  json avail = json::array();
  for (auto k : available) avail.push_back(wire_name(k));
  return {{"type", "status"},
          {"seq", seq},
          {"episode", episode},
          {"tick_rate", tick_rate},
          {"tick_rate_nominal", nominal_rate},
          {"controller", wire_name(controller)},
          {"available", avail},
          {"scenario", scenario}};
}

inline json error_json(std::uint64_t seq, const std::string& code, const std::string& message,
                       std::optional<std::uint64_t> in_reply_to) {
  json j = {{"type", "error"}, {"seq", seq}, {"code", code}, {"message", message}};
  j["in_reply_to"] = in_reply_to ? json(*in_reply_to) : json(nullptr);
  return j;
}

// ------------------------------------------------------------------
// Session
// ------------------------------------------------------------------

/// Immutable set of controllers a bridge can switch between; GroundTruth is always present.
struct ModelStore {
  std::map<ApproachKind, TrainedApproach> approaches;

  explicit ModelStore(const ControllerParams& params = {}) {
    TrainedApproach gt;
    gt.params = params;
    approaches[ApproachKind::GroundTruth] = gt;
  }

  void add(TrainedApproach app) {
    app.check();
    app.params = approaches.at(ApproachKind::GroundTruth).params;
    approaches[app.kind] = std::move(app);
  }

  std::vector<ApproachKind> available() const {
    std::vector<ApproachKind> out;
    for (const auto& [k, _] : approaches) out.push_back(k);
    return out;
  }
};

/**
 * One client's isolated world. Replies and world states are returned as
 * serialized frames. A session starts in the `still` scenario with seed 0 and
 * the GroundTruth controller.
 */
class BridgeSession {
 public:
  BridgeSession(std::shared_ptr<const ModelStore> models, FlightContext ctx, double nominal_rate = 30.0)
      : models_(std::move(models)), ctx_(std::move(ctx)), nominal_rate_(nominal_rate), measured_rate_(nominal_rate),
        loop_(make_world("still", 0), ctx_, 0) {}

  /// Frames to send right after the connection opens.
  std::vector<std::string> greeting() { return {status().dump()}; }

  std::vector<std::string> handle(std::string_view text) {
    Inbound msg;
    try {
      msg = parse_inbound(text);
    } catch (const ProtocolError& e) {
      return {error_json(next_seq_++, e.code, e.what(), e.seq).dump()};
    }
    const std::uint64_t seq = seq_of(msg);
    if (last_inbound_seq_ && seq <= *last_inbound_seq_)
      return {error_json(next_seq_++, "stale_seq",
                         "seq " + std::to_string(seq) + " is not greater than " + std::to_string(*last_inbound_seq_), seq)
                  .dump()};
    last_inbound_seq_ = seq;

    if (const auto* p = std::get_if<PersonPose>(&msg)) {
      const double h = ctx_.sim.arena_half_extent;
      loop_.push_person_pose({p->t, std::clamp(p->x, -h, h), std::clamp(p->y, -h, h), p->heading});
      return {};
    }
    if (const auto* s = std::get_if<SelectController>(&msg)) {
      if (!models_->approaches.contains(s->kind))
        return {error_json(next_seq_++, "model_unavailable", "no model loaded for " + wire_name(s->kind), seq).dump()};
      controller_ = s->kind;
      return {status().dump()};
    }
    const auto& r = std::get<Reset>(msg);
    try {
      const std::uint64_t seed = r.seed.value_or(0);
      loop_ = ClosedLoop(make_world(r.scenario, seed), ctx_, seed);
      scenario_ = parse_scenario(r.scenario).name();
    } catch (const ConfigError& e) {
      return {error_json(next_seq_++, "bad_value", e.what(), seq).dump()};
    }
    ++episode_;
    tick_ = 0;
    return {status().dump()};
  }

  /// Advances the world by one tick and returns the world_state frame.
  std::string tick() {
    const TraceSample s = loop_.tick(models_->approaches.at(controller_));
    return world_state_json(next_seq_++, episode_, tick_++, s, controller_).dump();
  }

  json status() { return status_json(next_seq_++, episode_, measured_rate_, nominal_rate_, controller_, models_->available(), scenario_); }

  void set_measured_rate(double hz) { measured_rate_ = hz; }
  ApproachKind controller() const { return controller_; }
  std::uint64_t episode() const { return episode_; }
  const ClosedLoop& loop() const { return loop_; }

 private:
  WorldState make_world(const std::string& scenario, std::uint64_t seed) const {
    return make_scenario(parse_scenario(scenario), seed, ctx_.sim, ctx_.controller.delta);
  }

  std::shared_ptr<const ModelStore> models_;
  FlightContext ctx_;
  double nominal_rate_;
  double measured_rate_;
  ClosedLoop loop_;
  ApproachKind controller_ = ApproachKind::GroundTruth;
  std::string scenario_ = "still";
  std::uint64_t episode_ = 0;
  std::int64_t tick_ = 0;
  std::uint64_t next_seq_ = 1;
  std::optional<std::uint64_t> last_inbound_seq_;
};

}  // namespace proxquad::bridge
