#include <gtest/gtest.h>

#include <cmath>

#include "proxquad/evaluation.hpp"
#include "proxquad/sim.hpp"
#include "support/gen.hpp"

using namespace proxquad;
using pqtest::for_all;
using pqtest::Gen;

namespace {

WorldState resting_world(double heading = 0.0) {
  WorldState w;
  w.drone.pose = {0, 0, 1.5, heading};
  w.person.pose = {2, 0, 1.7, M_PI};
  return w;
}

double path_length(PersonState p, Rng rng, double seconds) {
  double len = 0;
  const double dt = 1.0 / 30;
  for (int k = 0; k < static_cast<int>(seconds / dt); ++k) {
    const PersonState q = person_motion_step(p, k * dt, dt, rng);
    len += std::hypot(q.pose.x - p.pose.x, q.pose.y - p.pose.y);
    p = q;
  }
  return len;
}

}  // namespace

TEST(Step, Examples) {
  SimParams p;
  p.dt = 0.1;
  const WorldState a = step(resting_world(), {1, 0, 0, 0}, p);
  EXPECT_NEAR(a.drone.vel.x, 0.1, 1e-12);
  EXPECT_NEAR(a.drone.vel.y, 0.0, 1e-12);
  EXPECT_NEAR(a.drone.pose.x, 0.01, 1e-12);
  EXPECT_EQ(a.drone.pose.z, 1.5);

  const WorldState b = step(resting_world(M_PI / 2), {1, 0, 0, 0}, p);
  EXPECT_NEAR(b.drone.vel.x, 0.0, 1e-12);
  EXPECT_NEAR(b.drone.vel.y, 0.1, 1e-12);
}

TEST(Step, ZeroControlFixedPoint) {
  const WorldState w = resting_world();
  const WorldState n = step(w, {}, {});
  EXPECT_EQ(n.drone, w.drone);
  EXPECT_EQ(n.person.pose, w.person.pose);
  EXPECT_GT(n.t, w.t);
}

TEST(Step, FirstOrderLags) {
  SimParams p;
  WorldState w = resting_world();
  const WorldState n = step(w, {0, 0, 1.0, 2.0}, p);
  EXPECT_NEAR(n.drone.vel.z, 1.0 - std::exp(-p.dt / p.tau_vz), 1e-12);
  EXPECT_NEAR(n.drone.yaw_rate, 2.0 * (1.0 - std::exp(-p.dt / p.tau_yaw)), 1e-12);
}

TEST(Step, ArenaContainmentAndMonotoneTime) {
  for_all(50, 21, [](Gen& g, int) {
    SimParams p;
    WorldState w = make_scenario(parse_scenario("scripted:1.0"), g.integer(0, 1000), p);
    double t = w.t;
    for (int k = 0; k < 600; ++k) {
      w = step(std::move(w), g.control(), p);
      ASSERT_GE(w.t, t);
      t = w.t;
      ASSERT_LE(std::abs(w.drone.pose.x), p.arena_half_extent);
      ASSERT_LE(std::abs(w.drone.pose.y), p.arena_half_extent);
      ASSERT_LE(std::abs(w.person.pose.x), p.arena_half_extent);
      ASSERT_LE(std::abs(w.person.pose.y), p.arena_half_extent);
      ASSERT_GT(w.drone.pose.heading, -M_PI);
      ASSERT_LE(w.drone.pose.heading, M_PI);
    }
  });
}

TEST(Step, Deterministic) {
  const auto run = [] {
    WorldState w = make_scenario(parse_scenario("scripted:0.8"), 42);
    Gen g(5);
    std::vector<WorldState> out;
    for (int k = 0; k < 300; ++k) {
      w = step(std::move(w), g.control(1.0), {});
      out.push_back(w);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(RelativeHeadState, Examples) {
  const HeadState a = relative_head_state({0, 0, 0, 0}, {1.5, 0, 0, M_PI});
  EXPECT_NEAR(a.s_x, 1.5, 1e-12);
  EXPECT_NEAR(a.s_y, 0, 1e-12);
  EXPECT_NEAR(a.s_theta, 0, 1e-12);

  const HeadState b = relative_head_state({0, 0, 0, M_PI / 2}, {0, 2, 1.6, -M_PI / 2});
  EXPECT_NEAR(b.s_x, 2, 1e-12);
  EXPECT_NEAR(b.s_y, 0, 1e-12);
  EXPECT_NEAR(b.s_z, 1.6, 1e-12);
  EXPECT_NEAR(std::remainder(b.s_theta, 2 * M_PI), 0, 1e-12);

  const HeadState c = relative_head_state({0, 0, 0, 0}, {1.5, 0, 0, 0});
  EXPECT_EQ(c.s_theta, M_PI);
}

TEST(RelativeHeadState, RigidTransformInvariance) {
  for_all(100000, 22, [](Gen& g, int) {
    const Pose3 d = g.pose(), h = g.pose();
    const double rot = g.angle();
    const Vec3 shift{g.real(-10, 10), g.real(-10, 10), g.real(-2, 2)};
    auto move = [&](const Pose3& p) { return make_pose(rotate_z(p.position(), rot) + shift, p.heading + rot); };
    const HeadState a = relative_head_state(d, h), b = relative_head_state(move(d), move(h));
    ASSERT_NEAR(a.s_x, b.s_x, 1e-9);
    ASSERT_NEAR(a.s_y, b.s_y, 1e-9);
    ASSERT_NEAR(a.s_z, b.s_z, 1e-9);
    ASSERT_NEAR(wrap_angle(a.s_theta - b.s_theta), 0.0, 1e-9);
  });
}

TEST(PersonMotion, AggressivenessZeroStandsStill) {
  PersonState p;
  p.pose = {1, 1, 1.7, 0.3};
  p.profile.aggressiveness = 0.0;
  p.script.motion = PersonMotion::RandomWalk;
  p.script.waypoint_x = 1;
  p.script.waypoint_y = 1;
  Rng rng(1);
  for (int k = 0; k < 300; ++k) p = person_motion_step(p, k / 30.0, 1.0 / 30, rng);
  EXPECT_EQ(p.pose, (Pose3{1, 1, 1.7, 0.3}));
  EXPECT_EQ(p.vel, Vec3{});
}

TEST(PersonMotion, DeterministicPerSeed) {
  auto run = [] {
    WorldState w = make_scenario(parse_scenario("scripted:0.7"), 42);
    PersonState p = w.person;
    Rng rng(42);
    std::vector<PersonState> out;
    for (int k = 0; k < 300; ++k) out.push_back(p = person_motion_step(p, k / 30.0, 1.0 / 30, rng));
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(PersonMotion, MoreAggressiveWalksFurther) {
  for (std::uint64_t seed : {1u, 2u, 3u, 42u}) {
    WorldState w = make_scenario(parse_scenario("scripted:1.0"), seed);
    PersonState calm = w.person;
    calm.profile.aggressiveness = 0.0;
    const double a1 = path_length(w.person, Rng(seed), 30.0);
    const double a0 = path_length(calm, Rng(seed), 30.0);
    EXPECT_GT(a1, a0) << "seed " << seed;
  }
}

TEST(PersonMotion, KeepsPersonalSpace) {
  // A person walking straight at a hovering drone stops short of it.
  PersonState p;
  p.pose = {-2, 0, 1.7, 0};
  p.profile.aggressiveness = 1.0;
  p.script.motion = PersonMotion::RandomWalk;
  p.script.bound = 3.0;
  p.script.waypoint_x = 2;
  p.script.waypoint_y = 0;
  p.script.speed = 1.0;
  Rng rng(3);
  const Vec3 drone{0, 0, 1.5};
  for (int k = 0; k < 200; ++k) {
    p = person_motion_step(p, 60.0 + k / 30.0, 1.0 / 30, rng, drone);
    ASSERT_GE(std::hypot(p.pose.x, p.pose.y), kPersonalSpace - 1e-12);
  }
}

TEST(Scenario, ParsingAndErrors) {
  EXPECT_EQ(parse_scenario("approach_90").name(), "approach_90");
  EXPECT_EQ(parse_scenario("still").kind, ScenarioKind::Still);
  EXPECT_DOUBLE_EQ(parse_scenario("scripted:0.25").aggressiveness, 0.25);
  EXPECT_THROW(parse_scenario("approach_30"), ConfigError);
  EXPECT_THROW(parse_scenario("scripted:x"), ConfigError);
  EXPECT_THROW(parse_scenario("scripted:2"), ConfigError);
  EXPECT_THROW(parse_scenario("scriptedx"), ConfigError);
}

TEST(Scenario, ApproachGeometry) {
  for (auto [name, rel] : {std::pair{"approach_0", 0.0}, {"approach_45", M_PI / 4}, {"approach_90", M_PI / 2}}) {
    const WorldState w = make_scenario(parse_scenario(name), 7);
    // Angle between the person's facing direction and the direction to the drone.
    const Vec3 to_drone = w.drone.pose.position() - w.person.pose.position();
    const double facing = wrap_angle(w.person.pose.heading - std::atan2(to_drone.y, to_drone.x));
    EXPECT_NEAR(std::abs(facing), rel, 0.1) << name;
    EXPECT_NEAR(planar_norm(to_drone), 3.0, 0.2) << name;
  }
  EXPECT_EQ(make_scenario(parse_scenario("approach_90"), 9), make_scenario(parse_scenario("approach_90"), 9));
}

TEST(Scenario, StillPersonNeverMoves) {
  WorldState w = make_scenario(parse_scenario("still"), 3);
  Gen g(3);
  for (int k = 0; k < 600; ++k) {
    w = step(std::move(w), g.control(1.0), {});
    ASSERT_EQ(w.person.vel, Vec3{});
  }
}

TEST(Scenario, EyeHeightWithinUserRange) {
  for (auto name : {"approach_0", "still", "scripted:0.5"}) {
    const WorldState w = make_scenario(parse_scenario(name), 1);
    EXPECT_GE(w.person.pose.z, 1.4);
    EXPECT_LE(w.person.pose.z, 2.1);
  }
}

TEST(ClosedLoop, GroundTruthSettlesFromApproachScenarios) {
  for (auto name : {"approach_0", "approach_45", "approach_90"}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const RolloutTrace t = rollout(TrainedApproach{}, parse_scenario(name), 12.0, seed, {});
      const RolloutMetrics m = rollout_metrics(t);
      ASSERT_TRUE(m.settle_time.has_value()) << name << " seed " << seed;
      EXPECT_LT(*m.settle_time, 8.0) << name << " seed " << seed;
    }
  }
}

TEST(OdometrySensor, SampleAndHold) {
  OdometrySensor s(5.0);
  WorldState w = resting_world();
  w.drone.vel = {1, 0, 0};
  EXPECT_EQ(s.read(w).v_x, 1.0);
  w.drone.vel = {2, 0, 0};
  w.t = 0.1;
  EXPECT_EQ(s.read(w).v_x, 1.0);
  w.t = 0.2;
  EXPECT_EQ(s.read(w).v_x, 2.0);
}
