#pragma once

// Labeled test sets, ground-truth reachability oracles, confusion metrics and
// query-time benchmarking.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reachmap/grid.hpp"
#include "reachmap/ik.hpp"
#include "reachmap/kinematics.hpp"

namespace reachmap {

enum class Provenance { kFkSample, kOutsideRadius, kBelowPlane, kPerturbed };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kFkSample: return "fk-sample";
    case Provenance::kOutsideRadius: return "outside-radius";
    case Provenance::kBelowPlane: return "below-plane";
    case Provenance::kPerturbed: return "perturbed";
  }
  return "?";
}

inline std::optional<Provenance> provenance_from_string(const std::string& s) {
  for (auto p : {Provenance::kFkSample, Provenance::kOutsideRadius, Provenance::kBelowPlane, Provenance::kPerturbed}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

struct LabeledPose {
  Pose pose;
  bool reachable = false;
  Provenance provenance = Provenance::kFkSample;
};

struct OracleTolerance {
  double pos = 1e-3;
  double ang = 1e-2;
};

// ---------------------------------------------------------------------------
// Oracles

struct Planar2R {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Recognizes the two-link planar chain shape: z-axis joints at the origin and
/// at (l1, 0, 0), unrestricted limits, tool at (l2, 0, 0) with its z-axis along
/// the second link, and no collision model.
inline std::optional<Planar2R> as_planar2r(const KinematicChain& c) {
  constexpr double eps = 1e-12;
  constexpr double pi = std::numbers::pi;
  if (c.dof() != 2 || c.has_collision_model()) return std::nullopt;
  const auto& j = c.joints();
  for (const auto& jt : j) {
    if (std::abs(jt.axis.z() - 1.0) > eps || geodesic_so3(jt.origin.q, {}) > eps) return std::nullopt;
    if (jt.limits.lo > -pi + eps || jt.limits.hi < pi - eps) return std::nullopt;
  }
  if (norm(j[0].origin.t) > eps) return std::nullopt;
  const Vec3 o1 = j[1].origin.t;
  const Vec3 tt = c.tool().t;
  if (!(o1.x > 0.0) || std::abs(o1.y) > eps || std::abs(o1.z) > eps) return std::nullopt;
  if (!(tt.x > 0.0) || std::abs(tt.y) > eps || std::abs(tt.z) > eps) return std::nullopt;
  if (angle_between(approach_direction(c.tool().q).vec(), {1.0, 0.0, 0.0}) > eps) return std::nullopt;
  return Planar2R{o1.x, tt.x};
}

inline double wrap_angle(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

/// Closed-form membership: the position lies in the annulus on the z = 0 plane
/// and the approach direction matches the tool heading j1 + j2 of one of the two
/// elbow solutions.
inline bool planar2r_reachable(const Planar2R& p, const Pose& pose, const OracleTolerance& tol = {}) {
  const Vec3 t = pose.t;
  if (std::abs(t.z) > tol.pos) return false;
  const double r = std::hypot(t.x, t.y);
  const double rmin = std::abs(p.l1 - p.l2);
  const double rmax = p.l1 + p.l2;
  if (r < rmin - tol.pos || r > rmax + tol.pos) return false;
  const UnitVec3 a = approach_direction(pose.q);
  if (std::abs(std::asin(std::clamp(a.z(), -1.0, 1.0))) > tol.ang) return false;
  if (std::hypot(a.x(), a.y()) == 0.0) return false;
  const double heading = std::atan2(a.y(), a.x());
  // at the center of a degenerate annulus every heading is attainable
  if (r <= tol.pos && rmin <= tol.pos) return true;
  const double rc = std::clamp(r, rmin, rmax);
  const double c2 = std::clamp((rc * rc - p.l1 * p.l1 - p.l2 * p.l2) / (2.0 * p.l1 * p.l2), -1.0, 1.0);
  const double bearing = std::atan2(t.y, t.x);
  for (const double s : {1.0, -1.0}) {
    const double j2 = s * std::acos(c2);
    const double j1 = bearing - std::atan2(p.l2 * std::sin(j2), p.l1 + p.l2 * std::cos(j2));
    if (std::abs(wrap_angle(heading - (j1 + j2))) <= tol.ang) return true;
  }
  return false;
}

/// Ground truth for test labels: closed form for the planar chain, otherwise
/// damped-least-squares IK with random restarts and a collision check.
inline bool oracle_reachable(const KinematicChain& chain, const Pose& pose, const OracleTolerance& tol = {},
                             int restarts = 100, std::uint64_t seed = 0) {
  if (auto p = as_planar2r(chain)) return planar2r_reachable(*p, pose, tol);
  if (norm(pose.t - chain.base_point()) > chain.max_reach() + tol.pos) return false;
  IkOptions opt;
  opt.pos_tol = tol.pos;
  opt.ang_tol = tol.ang;
  opt.restarts = restarts;
  opt.seed = seed;
  return solve_ik(chain, pose, opt).has_value();
}

// ---------------------------------------------------------------------------
// Test sets

struct TestSetOptions {
  double outside_min = 0.05;  // beyond max reach, m
  double outside_max = 0.5;
  double below_min = 0.01;
  double below_max = 0.5;
  double pos_noise = 0.2;     // radius of the uniform position-noise ball, m
  double ang_noise = 0.5;     // max rotation angle of orientation noise, rad
  std::optional<double> floor_z;  // lower z bound of the workspace box, if any
  OracleTolerance tol;
  int ik_restarts = 100;
};

struct TestSplit {
  std::size_t fk = 0, outside = 0, below = 0, perturbed = 0;
};

inline TestSplit test_split(std::size_t total) {
  TestSplit s;
  const auto frac = [&](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(total))); };
  s.fk = frac(0.5);
  s.outside = frac(0.1);
  s.below = frac(0.1);
  s.perturbed = total - s.fk - s.outside - s.below;
  return s;
}

namespace detail {
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vec3 random_unit(std::mt19937_64& rng) {
  const double z = 2.0 * uniform01(rng) - 1.0;
  const double phi = 2.0 * std::numbers::pi * uniform01(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline UnitQuaternion random_rotation(std::mt19937_64& rng) {
  // Shoemake's subgroup algorithm
  const double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t1 = 2.0 * std::numbers::pi * u2, t2 = 2.0 * std::numbers::pi * u3;
  return {b * std::cos(t2), a * std::sin(t1), a * std::cos(t1), b * std::sin(t2)};
}
}  // namespace detail

/// 50% FK samples, 10% beyond max reach, 10% below the ground plane and the
/// workspace floor, 30% perturbed FK samples labeled by the oracle.
inline std::vector<LabeledPose> generate_test_set(const KinematicChain& chain, std::size_t total, std::uint64_t seed,
                                                  const TestSetOptions& opt = {}) {
  if (total < 10) throw InvalidParameter("generate_test_set: total must be >= 10");
  const TestSplit split = test_split(total);
  std::vector<LabeledPose> out;
  out.reserve(total);
  std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7e57u};
  std::mt19937_64 rng(sseq);
  const Vec3 base = chain.base_point();
  const double reach = chain.max_reach();

  PoseSampler fk(chain, seed, 0x7e570001);
  for (const auto& s : fk.next_batch(split.fk)) out.push_back({s.pose, true, Provenance::kFkSample});

  for (std::size_t i = 0; i < split.outside; ++i) {
    const double r = reach + opt.outside_min + (opt.outside_max - opt.outside_min) * detail::uniform01(rng);
    out.push_back({{base + detail::random_unit(rng) * r, detail::random_rotation(rng)}, false, Provenance::kOutsideRadius});
  }

  double top = std::min(0.0, base.z - reach);
  if (opt.floor_z) top = std::min(top, *opt.floor_z);
  for (std::size_t i = 0; i < split.below; ++i) {
    const double x = base.x + reach * (2.0 * detail::uniform01(rng) - 1.0);
    const double y = base.y + reach * (2.0 * detail::uniform01(rng) - 1.0);
    const double z = top - (opt.below_min + (opt.below_max - opt.below_min) * detail::uniform01(rng));
    out.push_back({{{x, y, z}, detail::random_rotation(rng)}, false, Provenance::kBelowPlane});
  }

  PoseSampler pert(chain, seed, 0x7e570002);
  std::uint64_t k = 0;
  for (const auto& s : pert.next_batch(std::max<std::size_t>(split.perturbed, 1))) {
    if (out.size() == total) break;
    Vec3 d;
    do {
      d = {2.0 * detail::uniform01(rng) - 1.0, 2.0 * detail::uniform01(rng) - 1.0, 2.0 * detail::uniform01(rng) - 1.0};
    } while (dot(d, d) > 1.0);
    const double angle = opt.ang_noise * detail::uniform01(rng);
    const UnitQuaternion dq = UnitQuaternion::from_axis_angle(detail::random_unit(rng), angle);
    const Pose p{s.pose.t + d * opt.pos_noise, dq * s.pose.q};
    const bool label = oracle_reachable(chain, p, opt.tol, opt.ik_restarts, seed + (k++));
    out.push_back({p, label, Provenance::kPerturbed});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_test_csv(std::ostream& os, const std::vector<LabeledPose>& set) {
  os << "x,y,z,qw,qx,qy,qz,label,provenance\n";
  os.precision(17);
  for (const auto& lp : set) {
    const auto& p = lp.pose;
    os << p.t.x << ',' << p.t.y << ',' << p.t.z << ',' << p.q.w() << ',' << p.q.x() << ',' << p.q.y() << ','
       << p.q.z() << ',' << (lp.reachable ? "reachable" : "unreachable") << ',' << to_string(lp.provenance) << '\n';
  }
}

struct CsvPose {
  Pose pose;
  std::optional<bool> label;
  std::optional<Provenance> provenance;
};

/// Reads `x,y,z,qw,qx,qy,qz[,label[,provenance]]` rows; a header line and blank
/// lines are skipped. Errors carry the 1-based line number.
inline std::vector<CsvPose> read_pose_csv(std::istream& is) {
  std::vector<CsvPose> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (lineno == 1 && line.rfind("x,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    auto fail = [&](const std::string& why) { throw FormatError("line " + std::to_string(lineno) + ": " + why); };
    if (f.size() < 7 || f.size() > 9) fail("expected 7 to 9 comma-separated fields");
    std::array<double, 7> v{};
    for (int i = 0; i < 7; ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(f[i], &used);
      } catch (const std::exception&) {
        fail("field " + std::to_string(i + 1) + " is not a number");
      }
      if (used != f[i].size() || !std::isfinite(v[i])) fail("field " + std::to_string(i + 1) + " is not a finite number");
    }
    CsvPose row;
    try {
      row.pose = {{v[0], v[1], v[2]}, UnitQuaternion(v[3], v[4], v[5], v[6])};
    } catch (const InvalidParameter&) {
      fail("zero quaternion");
    }
    if (f.size() >= 8) {
      if (f[7] == "reachable" || f[7] == "1") row.label = true;
      else if (f[7] == "unreachable" || f[7] == "0") row.label = false;
      else fail("label must be reachable or unreachable");
    }
    if (f.size() == 9) {
      row.provenance = provenance_from_string(f[8]);
      if (!row.provenance) fail("unknown provenance '" + f[8] + "'");
    }
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct QueryTiming {
  std::size_t batch = 0;
  double per_query_us = 0.0;  // median over repetitions
  double total_us = 0.0;
};

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  double accuracy() const { return static_cast<double>(tp + tn) / static_cast<double>(total()); }
  double tpr() const { return static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double fpr() const { return static_cast<double>(fp) / static_cast<double>(fp + tn); }
};

struct MetricsReport {
  Confusion counts;
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::vector<QueryTiming> timing;
};

inline Confusion confusion(const std::vector<bool>& predicted, const std::vector<bool>& labels) {
  if (predicted.size() != labels.size()) throw std::invalid_argument("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (predicted[i] ? c.tp : c.fn)++;
    else (predicted[i] ? c.fp : c.tn)++;
  }
  return c;
}

/// Median per-query time of batch_query over `reps` runs after one warm-up;
/// batches are filled by cycling through `poses`.
inline QueryTiming time_batch_query(const ReachGrid& grid, const std::vector<Pose>& poses, std::size_t batch,
                                    int reps = 5) {
  QueryTiming t;
  t.batch = batch;
  if (poses.empty() || batch == 0) return t;
  std::vector<Pose> b(batch);
  for (std::size_t i = 0; i < batch; ++i) b[i] = poses[i % poses.size()];
  (void)batch_query(grid, b);
  std::vector<double> totals;
  for (int r = 0; r < reps; ++r) totals.push_back(batch_query(grid, b).total_us);
  std::sort(totals.begin(), totals.end());
  t.total_us = totals[totals.size() / 2];
  t.per_query_us = t.total_us / static_cast<double>(batch);
  return t;
}

inline const std::vector<std::size_t>& default_timing_batches() {
  static const std::vector<std::size_t> b{100, 10'000, 1'000'000};
  return b;
}

/// Predictions come from batch_query (identical to per-pose query). Both
/// classes must be present so every rate has a positive denominator.
inline MetricsReport evaluate(const ReachGrid& grid, const std::vector<LabeledPose>& set,
                              const std::vector<std::size_t>& timing_batches = default_timing_batches(),
                              int reps = 5) {
  std::vector<Pose> poses;
  std::vector<bool> labels;
  for (const auto& lp : set) {
    poses.push_back(lp.pose);
    labels.push_back(lp.reachable);
  }
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw InvalidParameter("evaluate: test set needs both reachable and unreachable poses");
  }
  const auto res = batch_query(grid, poses);
  std::vector<bool> pred(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) pred[i] = res.results[i].has_value();
  MetricsReport m;
  m.counts = confusion(pred, labels);
  m.accuracy = m.counts.accuracy();
  m.tpr = m.counts.tpr();
  m.fpr = m.counts.fpr();
  for (std::size_t b : timing_batches) m.timing.push_back(time_batch_query(grid, poses, b, reps));
  return m;
}

}  // namespace reachmap
