#pragma once

// Per-cell coverage fraction: the share of a Fibonacci lattice lying within
// theta of some stored direction.

#include <cstdint>
#include <span>
#include <vector>

#include "reachmap/binary_io.hpp"
#include "reachmap/geometry.hpp"
#include "reachmap/grid.hpp"
#include "reachmap/map_io.hpp"

namespace reachmap {

inline constexpr std::uint32_t kDefaultCoverageSamples = 2000;

/// Dense x-major coverage values; unoccupied cells hold 0.
struct CoverageGrid {
  GridSpec spec;
  std::uint32_t samples = kDefaultCoverageSamples;
  std::vector<float> rho;

  float at(std::uint64_t id) const { return rho[id]; }
  bool operator==(const CoverageGrid&) const = default;
};

namespace detail {
inline std::vector<Vec3> canonical_samples(std::span<const UnitVec3> samples) {
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(canonical_direction(s.vec()).unit);
  return out;
}

inline double coverage(const Cell& cell, std::span<const Vec3> samples, double theta) {
  if (cell.empty() || samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Vec3& s : samples) {
    if (cell.nearest(s).angle < theta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}
}  // namespace detail

inline double compress_cell(const Cell& cell, std::span<const UnitVec3> samples, double theta) {
  const auto canon = detail::canonical_samples(samples);
  return detail::coverage(cell, canon, theta);
}

inline CoverageGrid compress_map(const ReachGrid& grid, std::uint32_t m = kDefaultCoverageSamples) {
  if (m == 0) throw InvalidParameter("compress_map: sample count must be >= 1");
  CoverageGrid out;
  out.spec = grid.spec();
  out.samples = m;
  out.rho.assign(grid.spec().cell_count(), 0.0f);
  const auto lattice = fibonacci_sphere(m);
  const auto canon = detail::canonical_samples(lattice);
  for (const auto& [id, cell] : grid.cells()) {
    out.rho[id] = static_cast<float>(detail::coverage(cell, canon, grid.spec().theta));
  }
  return out;
}

inline std::vector<std::uint8_t> serialize_coverage(const CoverageGrid& g) {
  io::Writer w;
  w.magic("RCMP");
  w.put(kFormatVersion);
  detail::put_spec(w, g.spec);
  w.put(g.samples);
  w.put_all(std::span<const float>(g.rho));
  return w.take();
}

inline CoverageGrid deserialize_coverage(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RCMP");
  detail::check_version(r);
  CoverageGrid g;
  g.spec = detail::get_spec(r);
  g.samples = r.get<std::uint32_t>();
  if (r.remaining() != g.spec.cell_count() * sizeof(float)) throw FormatError("RCMP payload size mismatch");
  g.rho.resize(g.spec.cell_count());
  for (auto& v : g.rho) v = r.get<float>();
  return g;
}

}  // namespace reachmap
