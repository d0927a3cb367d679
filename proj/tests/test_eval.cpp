#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace reachmap;
using rmtest::Gen;

namespace {
constexpr double kPi = std::numbers::pi;

Pose planar_pose(double x, double y, double heading) {
  return {{x, y, 0.0}, rmtest::quat_with_approach({std::cos(heading), std::sin(heading), 0.0})};
}
}  // namespace

TEST(Planar2ROracle, RecognizesChain) {
  const auto p = as_planar2r(chains::planar2r(0.6, 0.4));
  ASSERT_TRUE(p);
  EXPECT_EQ(p->l1, 0.6);
  EXPECT_EQ(p->l2, 0.4);
  EXPECT_FALSE(as_planar2r(chains::spatial6r()));
}

TEST(Planar2ROracle, Examples) {
  const Planar2R p{0.5, 0.5};
  EXPECT_TRUE(planar2r_reachable(p, planar_pose(1.0, 0.0, 0.0)));
  EXPECT_FALSE(planar2r_reachable(p, planar_pose(1.0, 0.0, 0.5)));
  // elbow at (0, 0.5): q = (pi/2, -pi/2), heading 0
  EXPECT_TRUE(planar2r_reachable(p, planar_pose(0.5, 0.5, 0.0)));
  // other elbow at (0.5, 0): heading pi/2
  EXPECT_TRUE(planar2r_reachable(p, planar_pose(0.5, 0.5, kPi / 2)));
  EXPECT_FALSE(planar2r_reachable(p, planar_pose(0.5, 0.5, kPi / 4)));
  EXPECT_FALSE(planar2r_reachable(p, planar_pose(1.1, 0.0, 0.0)));
  Pose lifted = planar_pose(1.0, 0.0, 0.0);
  lifted.t.z = 0.01;
  EXPECT_FALSE(planar2r_reachable(p, lifted));
  // the origin of a degenerate annulus admits every heading
  EXPECT_TRUE(planar2r_reachable(p, planar_pose(0.0, 0.0, 2.0)));
  EXPECT_FALSE(planar2r_reachable(Planar2R{0.6, 0.4}, planar_pose(0.1, 0.0, 0.0)));
}

TEST(Planar2ROracle, FkSamplesAreReachable) {
  const auto chain = chains::planar2r(0.6, 0.4);
  const auto p = *as_planar2r(chain);
  for (const auto& s : sample_fk_batch(chain, 10000, 3)) ASSERT_TRUE(planar2r_reachable(p, s.pose));
}

TEST(Planar2ROracle, AgreesWithDenseJointSweep) {
  const auto chain = chains::planar2r(0.5, 0.5);
  const Planar2R p{0.5, 0.5};
  const OracleTolerance tol{0.02, 0.05};
  Gen g(60);
  // FK positions with the heading turned by less than the tolerance are reachable
  for (int i = 0; i < 2000; ++i) {
    const Pose f = forward_kinematics(chain, JointConfig{g.uniform(-kPi, kPi), g.uniform(-kPi, kPi)});
    const auto a = approach_direction(f.q);
    const double heading = std::atan2(a.y(), a.x()) + g.uniform(-0.045, 0.045);
    ASSERT_TRUE(planar2r_reachable(p, planar_pose(f.t.x, f.t.y, heading), tol)) << i;
  }
  // a pose with no joint-grid pose nearby is unreachable; the grid spacing is ~0.009 rad
  constexpr int kSteps = 720;
  std::vector<Pose> fk;
  for (int a = 0; a < kSteps; ++a) {
    for (int b = 0; b < kSteps; ++b) {
      fk.push_back(forward_kinematics(chain, JointConfig{-kPi + 2 * kPi * a / kSteps, -kPi + 2 * kPi * b / kSteps}));
    }
  }
  int misses = 0;
  for (int i = 0; i < 300; ++i) {
    const double r = g.uniform(0.05, 1.1), bearing = g.uniform(-kPi, kPi), heading = g.uniform(-kPi, kPi);
    const Pose q = planar_pose(r * std::cos(bearing), r * std::sin(bearing), heading);
    bool near = false;
    for (const Pose& f : fk) {
      if (norm(f.t - q.t) <= 0.03 && geodesic_s2(approach_direction(f.q), approach_direction(q.q)) <= 0.08) {
        near = true;
        break;
      }
    }
    if (!near) {
      ASSERT_FALSE(planar2r_reachable(p, q, tol)) << i;
      ++misses;
    }
  }
  EXPECT_GT(misses, 100);
}

TEST(IkOracle, SpatialFkSamplesAreReachable) {
  const auto chain = chains::spatial6r();
  int ok = 0;
  const auto samples = sample_fk_batch(chain, 20, 5);
  for (std::size_t i = 0; i < samples.size(); ++i) ok += oracle_reachable(chain, samples[i].pose, {}, 100, i);
  EXPECT_GE(ok, 19);
  const Vec3 far = chain.base_point() + Vec3{chain.max_reach() + 0.1, 0, 0};
  EXPECT_FALSE(oracle_reachable(chain, {far, UnitQuaternion()}));
}

TEST(TestSet, SplitAndProvenance) {
  const auto s = test_split(1000);
  EXPECT_EQ(s.fk, 500u);
  EXPECT_EQ(s.outside, 100u);
  EXPECT_EQ(s.below, 100u);
  EXPECT_EQ(s.perturbed, 300u);
  const auto t = test_split(13);
  EXPECT_EQ(t.fk + t.outside + t.below + t.perturbed, 13u);
  EXPECT_THROW(generate_test_set(chains::planar2r(), 9, 1), InvalidParameter);
}

TEST(TestSet, PlanarLabelsMatchGeometry) {
  const auto chain = chains::planar2r(0.5, 0.5);
  const auto set = generate_test_set(chain, 2000, 8);
  ASSERT_EQ(set.size(), 2000u);
  const auto split = test_split(2000);
  std::array<std::size_t, 4> count{};
  for (const auto& lp : set) {
    ++count[static_cast<int>(lp.provenance)];
    const double r = std::hypot(lp.pose.t.x, lp.pose.t.y);
    switch (lp.provenance) {
      case Provenance::kFkSample:
        ASSERT_TRUE(lp.reachable);
        break;
      case Provenance::kOutsideRadius:
        ASSERT_FALSE(lp.reachable);
        ASSERT_GE(norm(lp.pose.t), 1.0 + 0.05 - 1e-12);
        ASSERT_LE(norm(lp.pose.t), 1.0 + 0.5 + 1e-12);
        break;
      case Provenance::kBelowPlane:
        ASSERT_FALSE(lp.reachable);
        ASSERT_LE(lp.pose.t.z, -1.0 - 0.01 + 1e-12);
        break;
      case Provenance::kPerturbed:
        ASSERT_EQ(lp.reachable, planar2r_reachable({0.5, 0.5}, lp.pose));
        if (lp.reachable) {
          ASSERT_LE(r, 1.0 + 1e-3);
        }
        break;
    }
  }
  EXPECT_EQ(count[0], split.fk);
  EXPECT_EQ(count[1], split.outside);
  EXPECT_EQ(count[2], split.below);
  EXPECT_EQ(count[3], split.perturbed);
  // deterministic for a fixed seed
  const auto again = generate_test_set(chain, 2000, 8);
  for (std::size_t i = 0; i < set.size(); ++i) {
    ASSERT_EQ(set[i].pose.t, again[i].pose.t);
    ASSERT_EQ(set[i].reachable, again[i].reachable);
  }
}

TEST(TestSet, OutsideRadiusIsUnreachableForSpatialChain) {
  const auto chain = chains::spatial6r();
  TestSetOptions opt;
  opt.ik_restarts = 5;
  const auto set = generate_test_set(chain, 20, 9, opt);
  for (const auto& lp : set) {
    if (lp.provenance == Provenance::kOutsideRadius) {
      EXPECT_GT(norm(lp.pose.t - chain.base_point()), chain.max_reach());
      EXPECT_FALSE(oracle_reachable(chain, lp.pose, {}, 5));
    }
  }
}

TEST(Metrics, ConfusionRates) {
  const auto c = confusion({true, true, false, false, true}, {true, false, false, true, true});
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_DOUBLE_EQ(c.accuracy(), 0.6);
  EXPECT_DOUBLE_EQ(c.tpr(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.fpr(), 0.5);
  EXPECT_THROW(confusion({true}, {}), std::invalid_argument);
}

TEST(Metrics, EmptyGridPredictsNothing) {
  const auto chain = chains::planar2r();
  const auto set = generate_test_set(chain, 200, 10);
  const ReachGrid empty(GridSpec::cube(1.05, 0.1, 0.1), 2);
  const auto m = evaluate(empty, set, {100}, 1);
  EXPECT_EQ(m.tpr, 0.0);
  EXPECT_EQ(m.fpr, 0.0);
  EXPECT_EQ(m.counts.tp + m.counts.fp, 0u);
  ASSERT_EQ(m.timing.size(), 1u);
  EXPECT_EQ(m.timing[0].batch, 100u);
}

TEST(Metrics, DenseMapFindsFkPoses) {
  const auto chain = chains::planar2r();
  ReachGrid g(GridSpec::cube(1.05, 0.1, 0.1), 2);
  insert_batch(g, sample_fk_batch(chain, 200000, 11));
  g.freeze();
  const auto set = generate_test_set(chain, 1000, 12);
  const auto m = evaluate(g, set, {}, 1);
  EXPECT_GT(m.tpr, 0.95);
  EXPECT_EQ(m.counts.total(), 1000u);
}

TEST(Metrics, SingleClassSetIsRejected) {
  const ReachGrid g(GridSpec::cube(1.05, 0.1, 0.1), 2);
  std::vector<LabeledPose> set(3);
  for (auto& lp : set) lp.reachable = true;
  EXPECT_THROW(evaluate(g, set, {}, 1), InvalidParameter);
}

TEST(Csv, RoundTrip) {
  const auto set = generate_test_set(chains::planar2r(), 100, 13);
  std::stringstream ss;
  write_test_csv(ss, set);
  const auto rows = read_pose_csv(ss);
  ASSERT_EQ(rows.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(rows[i].pose.t, set[i].pose.t);
    EXPECT_NEAR(geodesic_so3(rows[i].pose.q, set[i].pose.q), 0.0, 1e-12);
    EXPECT_EQ(rows[i].label, set[i].reachable);
    EXPECT_EQ(rows[i].provenance, set[i].provenance);
  }
}

TEST(Csv, BarePosesAndBlankLines) {
  std::stringstream ss("0.1,0.2,0.3,1,0,0,0\n\n0,0,0,0,0,0,2\n");
  const auto rows = read_pose_csv(ss);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].label);
  EXPECT_EQ(rows[1].pose.q.z(), 1.0);
  std::stringstream empty("");
  EXPECT_TRUE(read_pose_csv(empty).empty());
}

TEST(Csv, MalformedRowsReportLineNumbers) {
  const std::vector<std::pair<std::string, std::string>> bad{
      {"x,y,z,qw,qx,qy,qz\n0,0,0,1,0,0\n", "line 2"},
      {"0,0,0,1,0,0,0\n0,0,abc,1,0,0,0\n", "line 2"},
      {"0,0,0,0,0,0,0\n", "line 1"},
      {"0,0,0,1,0,0,0,maybe\n", "line 1"},
      {"0,0,0,1,0,0,0,reachable,unknown\n", "line 1"},
      {"\n\n0,0,nan,1,0,0,0\n", "line 3"},
      {"0,0,0,1,0,0,0,1,fk-sample,extra\n", "line 1"},
  };
  for (const auto& [text, where] : bad) {
    std::stringstream ss(text);
    try {
      read_pose_csv(ss);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  }
}
