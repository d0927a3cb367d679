#pragma once

// Metrics and packing bounds on S2 / SO(3), quasi-uniform sphere sampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "reachmap/error.hpp"

namespace reachmap {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr double operator[](std::size_t d) const { return d == 0 ? x : (d == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

/// Angle between two arbitrary non-zero vectors; scale invariant and exact at 0 and pi.
inline double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(norm(cross(a, b)), dot(a, b));
}

/// Point on S2. Constructors normalize; the zero vector is rejected.
class UnitVec3 {
 public:
  UnitVec3() = default;
  UnitVec3(double x, double y, double z) : UnitVec3(Vec3{x, y, z}) {}
  explicit UnitVec3(const Vec3& v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidParameter("UnitVec3: cannot normalize zero or non-finite vector");
    v_ = v * (1.0 / n);
  }

  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }
  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }  // NOLINT(google-explicit-constructor)

  bool operator==(const UnitVec3&) const = default;

 private:
  Vec3 v_{0.0, 0.0, 1.0};
};

/// Unit quaternion in the canonical hemisphere (qw >= 0).
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  UnitQuaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidParameter("UnitQuaternion: cannot normalize zero or non-finite quaternion");
    const double s = (w < 0.0 ? -1.0 : 1.0) / n;
    w_ = w * s;
    x_ = x * s;
    y_ = y * s;
    z_ = z * s;
  }

  static UnitQuaternion identity() { return {}; }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    const UnitVec3 a(axis);
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {std::cos(h), a.x() * s, a.y() * s, a.z() * s};
  }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  UnitQuaternion operator*(const UnitQuaternion& o) const {
    return {w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
            w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
            w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
            w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_};
  }

  UnitQuaternion conjugate() const { return {w_, -x_, -y_, -z_}; }

  Vec3 rotate(const Vec3& v) const {
    // v + 2w (u x v) + 2 u x (u x v)
    const Vec3 u{x_, y_, z_};
    const Vec3 t = cross(u, v) * 2.0;
    return v + t * w_ + cross(u, t);
  }

  bool operator==(const UnitQuaternion&) const = default;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

inline double dot(const UnitQuaternion& a, const UnitQuaternion& b) {
  return a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
}

/// Great-circle distance on S2, in [0, pi].
inline double geodesic_s2(const UnitVec3& a, const UnitVec3& b) { return angle_between(a.vec(), b.vec()); }

/// Rotation angle between two orientations, in [0, pi]; q and -q are identified.
inline double geodesic_so3(const UnitQuaternion& a, const UnitQuaternion& b) {
  const double s = dot(a, b) < 0.0 ? -1.0 : 1.0;
  double dm = 0.0;
  double dp = 0.0;
  const double da[4] = {a.w(), a.x(), a.y(), a.z()};
  const double db[4] = {b.w(), b.x(), b.y(), b.z()};
  for (int i = 0; i < 4; ++i) {
    const double m = da[i] - s * db[i];
    const double p = da[i] + s * db[i];
    dm += m * m;
    dp += p * p;
  }
  return 4.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
}

namespace detail {
inline void check_theta(double theta, const char* who) {
  if (!(theta > 0.0) || theta > std::numbers::pi) {
    throw InvalidParameter(std::string(who) + ": theta must lie in (0, pi], got " + std::to_string(theta));
  }
}
}  // namespace detail

/// Largest number of directions with pairwise separation >= theta that fit on S2
/// (exclusive caps of radius theta/2).
inline std::uint64_t capacity_bound_s2(double theta) {
  detail::check_theta(theta, "capacity_bound_s2");
  return static_cast<std::uint64_t>(std::floor(2.0 / (1.0 - std::cos(0.5 * theta))));
}

/// Same bound in SO(3) with the canonical metric (total volume pi^2).
inline std::uint64_t capacity_bound_so3(double theta) {
  detail::check_theta(theta, "capacity_bound_so3");
  const double h = 0.5 * theta;
  return static_cast<std::uint64_t>(std::floor(std::numbers::pi / (h - std::sin(h))));
}

/// Golden-angle spiral with uniform z spacing. Deterministic; m = 1 yields (1, 0, 0).
inline std::vector<UnitVec3> fibonacci_sphere(std::size_t m) {
  if (m == 0) throw InvalidParameter("fibonacci_sphere: m must be >= 1");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<UnitVec3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(m);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    pts.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return pts;
}

/// Tool z-axis expressed in the world frame.
inline UnitVec3 approach_direction(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  return UnitVec3(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y));
}

}  // namespace reachmap
