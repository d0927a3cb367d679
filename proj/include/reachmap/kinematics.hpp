#pragma once

// Serial-chain forward kinematics, joint sampling and a sphere-based
// self-collision filter.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"  // nlohmann, vendored

#include "reachmap/error.hpp"
#include "reachmap/geometry.hpp"

namespace reachmap {

using JointConfig = std::vector<double>;

/// End-effector pose: position in meters plus canonical unit quaternion.
struct Pose {
  Vec3 t;
  UnitQuaternion q;

  Pose compose(const Pose& rhs) const { return {t + q.rotate(rhs.t), q * rhs.q}; }
  bool operator==(const Pose&) const = default;
};

struct JointLimits {
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
};

struct Joint {
  Pose origin;  // parent frame -> joint frame, before rotation
  UnitVec3 axis{0.0, 0.0, 1.0};
  JointLimits limits;
};

struct CollisionSphere {
  Vec3 center;  // in the link frame
  double radius = 0.0;
};

/// Immutable after construction. Link 0 is the base; link k moves with joint k.
class KinematicChain {
 public:
  static constexpr std::size_t kMaxJoints = 16;

  KinematicChain(std::string name, std::vector<Joint> joints, Pose tool,
                 std::vector<std::vector<CollisionSphere>> spheres = {})
      : name_(std::move(name)), joints_(std::move(joints)), tool_(tool), spheres_(std::move(spheres)) {
    if (joints_.empty() || joints_.size() > kMaxJoints) {
      throw InvalidParameter("KinematicChain: joint count must be in [1, 16]");
    }
    for (const auto& j : joints_) {
      if (!(j.limits.lo < j.limits.hi)) throw InvalidParameter("KinematicChain: joint limits require lo < hi");
    }
    if (spheres_.size() > joints_.size() + 1) {
      throw InvalidParameter("KinematicChain: more collision sphere lists than links");
    }
    spheres_.resize(joints_.size() + 1);
    for (const auto& link : spheres_) {
      for (const auto& s : link) {
        if (!(s.radius > 0.0)) throw InvalidParameter("KinematicChain: sphere radius must be positive");
        has_spheres_ = true;
      }
    }
  }

  const std::string& name() const { return name_; }
  std::size_t dof() const { return joints_.size(); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Pose& tool() const { return tool_; }
  const std::vector<std::vector<CollisionSphere>>& spheres() const { return spheres_; }
  bool has_collision_model() const { return has_spheres_; }

  /// Upper bound on the distance from the first joint origin to the tool tip.
  double max_reach() const {
    double r = norm(tool_.t);
    for (std::size_t i = 1; i < joints_.size(); ++i) r += norm(joints_[i].origin.t);
    return r;
  }

  /// World position of the first joint; reach is measured from here.
  Vec3 base_point() const { return joints_.front().origin.t; }

 private:
  std::string name_;
  std::vector<Joint> joints_;
  Pose tool_;
  std::vector<std::vector<CollisionSphere>> spheres_;
  bool has_spheres_ = false;
};

namespace detail {
inline void check_config(const KinematicChain& chain, std::span<const double> j) {
  if (j.size() != chain.dof()) {
    throw std::invalid_argument("joint config has " + std::to_string(j.size()) + " values, chain '" + chain.name() +
                                "' has " + std::to_string(chain.dof()) + " joints");
  }
}
}  // namespace detail

/// Frames of links 0..n (link 0 = base at identity).
inline std::vector<Pose> link_frames(const KinematicChain& chain, std::span<const double> j) {
  detail::check_config(chain, j);
  std::vector<Pose> frames;
  frames.reserve(chain.dof() + 1);
  frames.push_back(Pose{});
  Pose cur;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const Joint& jt = chain.joints()[i];
    cur = cur.compose(jt.origin);
    cur.q = cur.q * UnitQuaternion::from_axis_angle(jt.axis, j[i]);
    frames.push_back(cur);
  }
  return frames;
}

inline Pose forward_kinematics(const KinematicChain& chain, std::span<const double> j) {
  detail::check_config(chain, j);
  Pose cur;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const Joint& jt = chain.joints()[i];
    cur = cur.compose(jt.origin);
    cur.q = cur.q * UnitQuaternion::from_axis_angle(jt.axis, j[i]);
  }
  return cur.compose(chain.tool());
}

/// True iff two spheres on non-adjacent links overlap.
inline bool self_collision_check(const KinematicChain& chain, std::span<const double> j) {
  if (!chain.has_collision_model()) return false;
  const auto frames = link_frames(chain, j);
  const auto& spheres = chain.spheres();
  std::vector<std::vector<std::pair<Vec3, double>>> world(spheres.size());
  for (std::size_t l = 0; l < spheres.size(); ++l) {
    for (const auto& s : spheres[l]) world[l].emplace_back(frames[l].t + frames[l].q.rotate(s.center), s.radius);
  }
  for (std::size_t a = 0; a < world.size(); ++a) {
    for (std::size_t b = a + 2; b < world.size(); ++b) {
      for (const auto& [ca, ra] : world[a]) {
        for (const auto& [cb, rb] : world[b]) {
          const Vec3 d = ca - cb;
          const double r = ra + rb;
          if (dot(d, d) < r * r) return true;
        }
      }
    }
  }
  return false;
}

using CollisionPredicate = std::function<bool(const JointConfig&)>;

struct SampledPose {
  JointConfig joints;
  Pose pose;
};

/// Per-worker stream of collision-free (config, pose) samples. The stream is a
/// pure function of (seed, worker index).
class PoseSampler {
 public:
  static constexpr std::size_t kRejectWindow = 100000;
  static constexpr double kMaxRejectFraction = 0.999;

  PoseSampler(const KinematicChain& chain, std::uint64_t seed, std::uint64_t worker = 0,
              CollisionPredicate collides = {})
      : chain_(&chain), collides_(std::move(collides)), window_(kRejectWindow, 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(worker), static_cast<std::uint32_t>(worker >> 32), 0x5eedu};
    rng_.seed(seq);
    if (!collides_) {
      const KinematicChain* c = chain_;
      collides_ = [c](const JointConfig& j) { return self_collision_check(*c, j); };
    }
  }

  std::vector<SampledPose> next_batch(std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("sample_fk_batch: batch_size must be >= 1");
    std::vector<SampledPose> out;
    out.reserve(batch_size);
    const auto& joints = chain_->joints();
    while (out.size() < batch_size) {
      JointConfig j(joints.size());
      for (std::size_t i = 0; i < joints.size(); ++i) {
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        j[i] = joints[i].limits.lo + u * (joints[i].limits.hi - joints[i].limits.lo);
      }
      const bool rejected = collides_(j);
      record(rejected);
      if (rejected) continue;
      Pose p = forward_kinematics(*chain_, j);
      out.push_back({std::move(j), p});
    }
    return out;
  }

  std::uint64_t draws() const { return draws_; }

 private:
  void record(bool rejected) {
    const std::size_t slot = draws_ % kRejectWindow;
    window_rejects_ -= window_[slot];
    window_[slot] = rejected ? 1 : 0;
    window_rejects_ += window_[slot];
    ++draws_;
    if (draws_ >= kRejectWindow &&
        static_cast<double>(window_rejects_) > kMaxRejectFraction * static_cast<double>(kRejectWindow)) {
      throw DegenerateChain("chain '" + chain_->name() + "': more than 99.9% of the last 100000 draws self-collide");
    }
  }

  const KinematicChain* chain_;
  CollisionPredicate collides_;
  std::mt19937_64 rng_;
  std::vector<std::uint8_t> window_;
  std::size_t window_rejects_ = 0;
  std::uint64_t draws_ = 0;
};

inline std::vector<SampledPose> sample_fk_batch(const KinematicChain& chain, std::size_t batch_size,
                                                std::uint64_t seed, std::uint64_t worker = 0) {
  return PoseSampler(chain, seed, worker).next_batch(batch_size);
}

// ---------------------------------------------------------------------------
// Chain documents (JSON)

namespace detail {
inline Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(std::string("chain: '") + what + "' must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
inline UnitQuaternion quat_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) throw FormatError(std::string("chain: '") + what + "' must be a 4-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}
}  // namespace detail

inline KinematicChain chain_from_json(const nlohmann::json& doc) {
  try {
    std::vector<Joint> joints;
    for (const auto& jj : doc.at("joints")) {
      Joint jt;
      jt.origin.t = detail::vec3_from_json(jj.at("origin_xyz"), "origin_xyz");
      jt.origin.q = jj.contains("origin_quat_wxyz") ? detail::quat_from_json(jj["origin_quat_wxyz"], "origin_quat_wxyz")
                                                    : UnitQuaternion{};
      jt.axis = UnitVec3(detail::vec3_from_json(jj.at("axis"), "axis"));
      const auto& lim = jj.at("limits");
      if (!lim.is_array() || lim.size() != 2) throw FormatError("chain: 'limits' must be a 2-array");
      jt.limits = {lim[0].get<double>(), lim[1].get<double>()};
      joints.push_back(jt);
    }
    Pose tool;
    if (doc.contains("tool")) {
      const auto& t = doc["tool"];
      if (t.contains("xyz")) tool.t = detail::vec3_from_json(t["xyz"], "tool.xyz");
      if (t.contains("quat_wxyz")) tool.q = detail::quat_from_json(t["quat_wxyz"], "tool.quat_wxyz");
    }
    std::vector<std::vector<CollisionSphere>> spheres;
    if (doc.contains("collision_spheres")) {
      for (const auto& link : doc["collision_spheres"]) {
        auto& out = spheres.emplace_back();
        for (const auto& s : link) {
          out.push_back({detail::vec3_from_json(s.at("center"), "center"), s.at("radius").get<double>()});
        }
      }
    }
    return KinematicChain(doc.value("name", std::string("unnamed")), std::move(joints), tool, std::move(spheres));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("chain document: ") + e.what());
  }
}

inline nlohmann::json chain_to_json(const KinematicChain& chain) {
  auto v3 = [](const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); };
  auto q4 = [](const UnitQuaternion& q) { return nlohmann::json::array({q.w(), q.x(), q.y(), q.z()}); };
  nlohmann::json doc;
  doc["name"] = chain.name();
  doc["joints"] = nlohmann::json::array();
  for (const auto& j : chain.joints()) {
    doc["joints"].push_back({{"origin_xyz", v3(j.origin.t)},
                             {"origin_quat_wxyz", q4(j.origin.q)},
                             {"axis", v3(j.axis.vec())},
                             {"limits", {j.limits.lo, j.limits.hi}}});
  }
  doc["tool"] = {{"xyz", v3(chain.tool().t)}, {"quat_wxyz", q4(chain.tool().q)}};
  doc["collision_spheres"] = nlohmann::json::array();
  for (const auto& link : chain.spheres()) {
    auto arr = nlohmann::json::array();
    for (const auto& s : link) arr.push_back({{"center", v3(s.center)}, {"radius", s.radius}});
    doc["collision_spheres"].push_back(arr);
  }
  return doc;
}

inline KinematicChain load_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open chain file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("chain file '" + path + "': " + e.what());
  }
  return chain_from_json(doc);
}

// ---------------------------------------------------------------------------
// Shipped chains

namespace chains {

/// Two revolute-z links along x; the tool z-axis is turned onto the second link
/// so the approach direction stays in the plane.
inline KinematicChain planar2r(double l1 = 0.5, double l2 = 0.5) {
  constexpr double pi = std::numbers::pi;
  std::vector<Joint> joints(2);
  joints[0].limits = {-pi, pi};
  joints[1].origin.t = {l1, 0.0, 0.0};
  joints[1].limits = {-pi, pi};
  Pose tool{{l2, 0.0, 0.0}, UnitQuaternion::from_axis_angle({0.0, 1.0, 0.0}, pi / 2.0)};
  return KinematicChain("planar2r", std::move(joints), tool);
}

/// Generic 6-DOF elbow arm: base yaw, three pitch joints, forearm roll, and a
/// final twist about the tool approach axis.
inline KinematicChain spatial6r() {
  constexpr double pi = std::numbers::pi;
  auto joint = [](Vec3 origin, Vec3 axis, double lo, double hi) {
    Joint j;
    j.origin.t = origin;
    j.axis = UnitVec3(axis);
    j.limits = {lo, hi};
    return j;
  };
  std::vector<Joint> joints{
      joint({0.0, 0.0, 0.2}, {0, 0, 1}, -pi, pi),  joint({0.0, 0.0, 0.0}, {0, 1, 0}, -pi, pi),
      joint({0.0, 0.0, 0.35}, {0, 1, 0}, -2.8, 2.8), joint({0.0, 0.0, 0.3}, {0, 1, 0}, -pi, pi),
      joint({0.0, 0.0, 0.08}, {1, 0, 0}, -pi, pi), joint({0.0, 0.0, 0.08}, {0, 0, 1}, -pi, pi),
  };
  std::vector<std::vector<CollisionSphere>> spheres{
      {{{0.0, 0.0, 0.08}, 0.08}},
      {{{0.0, 0.0, 0.0}, 0.06}},
      {{{0.0, 0.0, 0.12}, 0.05}, {{0.0, 0.0, 0.24}, 0.05}},
      {{{0.0, 0.0, 0.1}, 0.045}, {{0.0, 0.0, 0.2}, 0.045}},
      {{{0.0, 0.0, 0.04}, 0.04}},
      {{{0.0, 0.0, 0.04}, 0.035}},
      {{{0.0, 0.0, 0.03}, 0.03}},
  };
  return KinematicChain("spatial6r", std::move(joints), Pose{{0.0, 0.0, 0.05}, {}}, std::move(spheres));
}

}  // namespace chains

}  // namespace reachmap
