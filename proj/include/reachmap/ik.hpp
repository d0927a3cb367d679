#pragma once

// Damped-least-squares position + approach-direction IK with random restarts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "reachmap/kinematics.hpp"

namespace reachmap {

struct IkOptions {
  double pos_tol = 1e-3;
  double ang_tol = 1e-2;
  int restarts = 100;
  int max_iterations = 150;
  double damping = 0.05;
  double max_step = 0.5;  // rad per joint per iteration
  std::uint64_t seed = 0;
};

struct IkResult {
  JointConfig config;
  double pos_error = 0.0;
  double ang_error = 0.0;
};

namespace detail {

/// Position error (3 rows) and approach-direction error (3 rows, rotation
/// vector turning the current approach onto the target).
inline Eigen::Matrix<double, 6, 1> ik_error(const Pose& cur, const Vec3& target_t, const Vec3& target_a,
                                            double& pos_err, double& ang_err) {
  const Vec3 dp = target_t - cur.t;
  const Vec3 a = approach_direction(cur.q);
  const Vec3 c = cross(a, target_a);
  ang_err = angle_between(a, target_a);
  const double cn = norm(c);
  Vec3 w{};
  if (cn > 1e-15) {
    w = c * (ang_err / cn);
  } else if (ang_err > 1.0) {
    // antipodal: any axis orthogonal to a
    const Vec3 ref = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 ax = cross(a, ref);
    w = ax * (ang_err / norm(ax));
  }
  pos_err = norm(dp);
  Eigen::Matrix<double, 6, 1> e;
  e << dp.x, dp.y, dp.z, w.x, w.y, w.z;
  return e;
}

inline Eigen::Matrix<double, 6, Eigen::Dynamic> ik_jacobian(const KinematicChain& chain, const JointConfig& q,
                                                            Pose& tip) {
  const auto frames = link_frames(chain, q);
  tip = frames.back().compose(chain.tool());
  const Vec3 a = approach_direction(tip.q);
  Eigen::Matrix<double, 6, Eigen::Dynamic> J(6, chain.dof());
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const Vec3 axis = frames[i + 1].q.rotate(chain.joints()[i].axis.vec());
    const Vec3 lin = cross(axis, tip.t - frames[i + 1].t);
    // only the rotation component orthogonal to the approach axis moves it
    const Vec3 ang = axis - a * dot(axis, a);
    J.col(static_cast<Eigen::Index>(i)) << lin.x, lin.y, lin.z, ang.x, ang.y, ang.z;
  }
  return J;
}

}  // namespace detail

/// First collision-free solution reaching `target` position and approach
/// direction within tolerance, trying up to `restarts` random initial configs.
inline std::optional<IkResult> solve_ik(const KinematicChain& chain, const Pose& target, const IkOptions& opt = {},
                                        const JointConfig* initial = nullptr) {
  const Vec3 ta = approach_direction(target.q);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& joints = chain.joints();
  const auto n = static_cast<Eigen::Index>(chain.dof());
  for (int attempt = 0; attempt < opt.restarts; ++attempt) {
    JointConfig q(chain.dof());
    if (attempt == 0 && initial != nullptr && initial->size() == chain.dof()) {
      q = *initial;
    } else {
      for (std::size_t i = 0; i < q.size(); ++i) q[i] = joints[i].limits.lo + unit(rng) * (joints[i].limits.hi - joints[i].limits.lo);
    }
    for (int it = 0; it <= opt.max_iterations; ++it) {
      Pose tip;
      const auto J = detail::ik_jacobian(chain, q, tip);
      double pe = 0.0, ae = 0.0;
      const auto e = detail::ik_error(tip, target.t, ta, pe, ae);
      if (pe <= opt.pos_tol && ae <= opt.ang_tol) {
        if (self_collision_check(chain, q)) break;
        return IkResult{q, pe, ae};
      }
      if (it == opt.max_iterations) break;
      const Eigen::Matrix<double, 6, 6> A =
          J * J.transpose() + opt.damping * opt.damping * Eigen::Matrix<double, 6, 6>::Identity();
      const Eigen::VectorXd dq = J.transpose() * A.ldlt().solve(e);
      const double mx = dq.cwiseAbs().maxCoeff();
      const double scale = mx > opt.max_step ? opt.max_step / mx : 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& lim = joints[static_cast<std::size_t>(i)].limits;
        q[static_cast<std::size_t>(i)] = std::clamp(q[static_cast<std::size_t>(i)] + scale * dq(i), lim.lo, lim.hi);
      }
    }
  }
  return std::nullopt;
}

}  // namespace reachmap
