#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace reachmap;
using rmtest::Gen;

TEST(CompressCell, EmptyCellIsZero) {
  const auto lattice = fibonacci_sphere(100);
  EXPECT_EQ(compress_cell(Cell(0), lattice, 0.1), 0.0);
}

TEST(CompressCell, EntriesEqualToSamplesGiveOne) {
  const auto lattice = fibonacci_sphere(300);
  Cell cell(0);
  for (const auto& v : lattice) cell.append(canonical_direction(v.vec()), {}, {});
  EXPECT_EQ(compress_cell(cell, lattice, 0.1), 1.0);
}

TEST(CompressCell, SingleEntryMatchesCapArea) {
  const auto lattice = fibonacci_sphere(100000);
  Gen g(30);
  const double p = (1.0 - std::cos(0.1)) / 2.0;
  const double se = std::sqrt(p * (1.0 - p) / 1e5);
  for (int i = 0; i < 10; ++i) {
    Cell cell(0);
    try_insert(cell, g.unit(), {}, 0.1);
    EXPECT_NEAR(compress_cell(cell, lattice, 0.1), p, 3.0 * se);
  }
}

TEST(CompressCell, MonotoneAndPermutationInvariant) {
  const auto lattice = fibonacci_sphere(2000);
  Gen g(31);
  for (int trial = 0; trial < 100; ++trial) {
    Cell cell(0);
    std::vector<UnitVec3> added;
    double prev = 0.0;
    for (int i = 0; i < 30; ++i) {
      const auto v = g.unit();
      if (std::holds_alternative<Inserted>(try_insert(cell, v, {}, 0.3))) added.push_back(v);
      const double rho = compress_cell(cell, lattice, 0.3);
      ASSERT_GE(rho, prev);
      ASSERT_LE(rho, 1.0);
      prev = rho;
    }
    Cell reversed(0);
    for (auto it = added.rbegin(); it != added.rend(); ++it) reversed.append(canonical_direction(it->vec()), {}, {});
    ASSERT_EQ(compress_cell(reversed, lattice, 0.3), prev);
  }
}

TEST(CompressMap, EmptyGridIsAllZero) {
  const ReachGrid g(GridSpec::cube(1.0, 0.25, 0.1), 1);
  const auto c = compress_map(g, 50);
  EXPECT_EQ(c.rho.size(), g.spec().cell_count());
  for (float v : c.rho) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(compress_map(g, 0), InvalidParameter);
}

TEST(CompressMap, SaturatedCellExceedsSparseCell) {
  const auto s = GridSpec::cube(1.0, 0.5, 0.3);
  ReachGrid g(s, 1);
  Gen gen(32);
  const Vec3 a = s.center({0, 0, 0}), b = s.center({1, 1, 1});
  for (int i = 0; i < 5000; ++i) insert_sequential(g, JointConfig{0.0}, {a, gen.quat()});
  insert_sequential(g, JointConfig{0.0}, {b, gen.quat()});
  const auto c = compress_map(g);
  EXPECT_GT(c.at(*cell_id(s, a)), c.at(*cell_id(s, b)));
  EXPECT_GT(c.at(*cell_id(s, a)), 0.95f);
}

TEST(CompressMap, PlanarMapBounded) {
  const auto chain = chains::planar2r();
  ReachGrid g(GridSpec::cube(1.05, 0.05, 0.1), 2);
  insert_batch(g, sample_fk_batch(chain, 100000, 4));
  const auto c = compress_map(g);
  double sum = 0.0;
  for (const auto& [id, cell] : g.cells()) sum += c.at(id);
  const double mean = sum / static_cast<double>(g.occupied());
  EXPECT_GT(mean, 0.0);
  EXPECT_LT(mean, 1.0);
  // planar approach directions span one great circle: coverage stays near its band area
  EXPECT_LT(mean, 0.1);
  EXPECT_EQ(c.rho.size(), g.spec().cell_count());
  EXPECT_EQ(compress_map(g), c);
}
