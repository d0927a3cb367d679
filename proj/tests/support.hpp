#pragma once

// Hand-rolled generators and reference oracles shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "reachmap/reachmap.hpp"

namespace rmtest {

using namespace reachmap;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

  UnitVec3 unit() {
    std::normal_distribution<double> n;
    for (;;) {
      const Vec3 v{n(rng), n(rng), n(rng)};
      if (norm(v) > 1e-6) return UnitVec3(v);
    }
  }

  UnitQuaternion quat() {
    std::normal_distribution<double> n;
    for (;;) {
      const double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
      if (w * w + x * x + y * y + z * z > 1e-8) return {w, x, y, z};
    }
  }

  /// Direction at exactly `angle` from `v`, in a random plane through v.
  UnitVec3 at_angle(const UnitVec3& v, double angle) {
    Vec3 p = cross(v.vec(), unit().vec());
    while (norm(p) < 1e-6) p = cross(v.vec(), unit().vec());
    p = p * (1.0 / norm(p));
    return UnitVec3(v.vec() * std::cos(angle) + p * std::sin(angle));
  }

  Vec3 point(const GridSpec& s, double margin = 0.0) {
    return {uniform(s.lo[0] - margin, s.hi[0] + margin), uniform(s.lo[1] - margin, s.hi[1] + margin),
            uniform(s.lo[2] - margin, s.hi[2] + margin)};
  }
};

/// Quaternion whose tool z-axis equals `a`: shortest-arc rotation from +z.
inline UnitQuaternion quat_with_approach(const Vec3& a) {
  const Vec3 z{0.0, 0.0, 1.0};
  const Vec3 u = a * (1.0 / norm(a));
  const double c = dot(z, u);
  if (c < -1.0 + 1e-12) return {0.0, 1.0, 0.0, 0.0};
  const Vec3 ax = cross(z, u);
  return {1.0 + c, ax.x, ax.y, ax.z};
}

/// Reference map: one insert_sequential call per pose, in order.
inline ReachGrid sequential_build(const GridSpec& spec, std::uint16_t dof, const std::vector<SampledPose>& poses) {
  ReachGrid g(spec, dof);
  for (const auto& s : poses) insert_sequential(g, s.joints, s.pose);
  return g;
}

/// Exhaustive separation check; returns the number of violating pairs.
inline std::size_t separation_violations(const Cell& c, double theta, double slack = 1e-9) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      if (geodesic_s2(c.direction(i), c.direction(j)) < theta - slack) ++bad;
    }
  }
  return bad;
}

}  // namespace rmtest
