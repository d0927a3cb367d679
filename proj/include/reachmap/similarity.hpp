#pragma once

// Cell-wise squared maximum mean discrepancy between two maps on the same grid,
// with a multi-scale RBF kernel over approach directions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "reachmap/binary_io.hpp"
#include "reachmap/grid.hpp"
#include "reachmap/map_io.hpp"

namespace reachmap {

inline constexpr std::uint32_t kDefaultKernelScales = 5;
inline constexpr std::uint32_t kDefaultSubsampleCap = 256;
inline constexpr float kOneEmptySentinel = 2.0f;

/// Mean of exp(-gamma_m |x - y|^2) over gamma_m = 2^(m - M/2), m = 1..M.
inline double rbf_multiscale(const Vec3& x, const Vec3& y, std::uint32_t m_scales = kDefaultKernelScales) {
  if (m_scales == 0) throw InvalidParameter("rbf_multiscale: scale count must be >= 1");
  const Vec3 d = x - y;
  const double d2 = dot(d, d);
  double s = 0.0;
  for (std::uint32_t m = 1; m <= m_scales; ++m) {
    s += std::exp(-std::exp2(static_cast<double>(m) - 0.5 * m_scales) * d2);
  }
  return s / static_cast<double>(m_scales);
}

namespace detail {
inline bool lex_less(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::array<double, 3> x{a[i].x, a[i].y, a[i].z};
    const std::array<double, 3> y{b[i].x, b[i].y, b[i].z};
    if (x != y) return x < y;
  }
  return false;
}

inline double mean_kernel(std::span<const Vec3> a, std::span<const Vec3> b, std::uint32_t m_scales) {
  double s = 0.0;
  for (const Vec3& x : a) {
    for (const Vec3& y : b) s += rbf_multiscale(x, y, m_scales);
  }
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}
}  // namespace detail

/// Biased estimator E_AA - 2 E_AB + E_BB, clamped at 0. The pair is put in a
/// canonical order first, so the result is exactly symmetric and exactly 0 for
/// identical sets.
inline double cell_mmd(std::span<const Vec3> a, std::span<const Vec3> b,
                       std::uint32_t m_scales = kDefaultKernelScales) {
  if (a.empty() || b.empty()) throw std::invalid_argument("cell_mmd: sample sets must be non-empty");
  if (detail::lex_less(b, a)) std::swap(a, b);
  const double aa = detail::mean_kernel(a, a, m_scales);
  const double ab = detail::mean_kernel(a, b, m_scales);
  const double bb = detail::mean_kernel(b, b, m_scales);
  return std::max(0.0, aa - 2.0 * ab + bb);
}

inline double cell_mmd(std::span<const UnitVec3> a, std::span<const UnitVec3> b,
                       std::uint32_t m_scales = kDefaultKernelScales) {
  std::vector<Vec3> va, vb;
  for (const auto& v : a) va.push_back(v.vec());
  for (const auto& v : b) vb.push_back(v.vec());
  return cell_mmd(std::span<const Vec3>(va), std::span<const Vec3>(vb), m_scales);
}

/// At most `cap` entries of a cell at evenly strided positions floor(i * n / cap).
inline std::vector<Vec3> subsample_directions(const Cell& cell, std::uint32_t cap) {
  const std::size_t n = cell.size();
  const std::size_t k = std::min<std::size_t>(n, cap);
  std::vector<Vec3> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(cell.unit(k == n ? i : i * n / k));
  return out;
}

struct SimilarityGrid {
  GridSpec spec;
  std::uint32_t scales = kDefaultKernelScales;
  std::uint32_t cap = kDefaultSubsampleCap;
  std::vector<float> values;

  float at(std::uint64_t id) const { return values[id]; }
  bool operator==(const SimilarityGrid&) const = default;
};

inline void require_compatible(const GridSpec& a, const GridSpec& b) {
  if (!(a == b)) throw IncompatibleGrids("maps do not share bounds, cell size, theta and dims");
}

/// Both empty: 0. One empty: 2. Both occupied: MMD^2 over subsampled directions.
inline SimilarityGrid similarity_grid(const ReachGrid& a, const ReachGrid& b,
                                      std::uint32_t m_scales = kDefaultKernelScales,
                                      std::uint32_t cap = kDefaultSubsampleCap) {
  require_compatible(a.spec(), b.spec());
  if (m_scales == 0) throw InvalidParameter("similarity_grid: scale count must be >= 1");
  if (cap == 0) throw InvalidParameter("similarity_grid: subsample cap must be >= 1");
  SimilarityGrid out;
  out.spec = a.spec();
  out.scales = m_scales;
  out.cap = cap;
  out.values.assign(a.spec().cell_count(), 0.0f);
  for (const auto& [id, ca] : a.cells()) {
    const Cell* cb = b.find(id);
    if (cb == nullptr) {
      out.values[id] = kOneEmptySentinel;
      continue;
    }
    const auto sa = subsample_directions(ca, cap);
    const auto sb = subsample_directions(*cb, cap);
    out.values[id] = static_cast<float>(cell_mmd(std::span<const Vec3>(sa), std::span<const Vec3>(sb), m_scales));
  }
  for (const auto& [id, cb] : b.cells()) {
    if (a.find(id) == nullptr) out.values[id] = kOneEmptySentinel;
  }
  return out;
}

inline std::vector<std::uint8_t> serialize_similarity(const SimilarityGrid& g) {
  io::Writer w;
  w.magic("RSIM");
  w.put(kFormatVersion);
  detail::put_spec(w, g.spec);
  w.put(g.scales);
  w.put(g.cap);
  w.put_all(std::span<const float>(g.values));
  return w.take();
}

inline SimilarityGrid deserialize_similarity(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RSIM");
  detail::check_version(r);
  SimilarityGrid g;
  g.spec = detail::get_spec(r);
  g.scales = r.get<std::uint32_t>();
  g.cap = r.get<std::uint32_t>();
  if (r.remaining() != g.spec.cell_count() * sizeof(float)) throw FormatError("RSIM payload size mismatch");
  g.values.resize(g.spec.cell_count());
  for (auto& v : g.values) v = r.get<float>();
  return g;
}

}  // namespace reachmap
