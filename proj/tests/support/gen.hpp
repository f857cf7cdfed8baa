// Seeded value generators for property tests.
#pragma once

#include <cstdint>
#include <random>

#include "proxquad/controller.hpp"
#include "proxquad/sim.hpp"

namespace pqtest {

using namespace proxquad;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  bool coin() { return integer(0, 1) == 1; }
  double angle() { return real(-kPi, kPi); }

  HeadState head(double reach = 5.0) {
    return {real(-reach, reach), real(-reach, reach), real(-1.5, 1.5), wrap_angle(angle())};
  }
  Odometry odom() { return {real(-3.0, 3.0), real(-3.0, 3.0)}; }
  FullState state() { return {head(), odom()}; }
  Pose3 pose(double reach = 3.0) { return {real(-reach, reach), real(-reach, reach), real(0.5, 2.5), wrap_angle(angle())}; }
  Control control(double scale = 3.0) { return {real(-scale, scale), real(-scale, scale), real(-scale, scale), real(-scale, scale)}; }
};

/// Calls f(gen, i) n times with one deterministic generator.
template <class F>
void for_all(int n, std::uint64_t seed, F&& f) {
  Gen g(seed);
  for (int i = 0; i < n; ++i) f(g, i);
}

}  // namespace pqtest
