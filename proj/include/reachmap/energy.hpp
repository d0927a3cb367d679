#pragma once

// Energy field over the grid derived from a similarity grid: seed cells at zero,
// wavefront propagation outward, Gaussian smoothing, and C1 interpolation with
// gradients for guidance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "reachmap/binary_io.hpp"
#include "reachmap/grid.hpp"
#include "reachmap/map_io.hpp"
#include "reachmap/similarity.hpp"

namespace reachmap {

struct Box {
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  bool contains(const Vec3& p) const {
    for (int d = 0; d < 3; ++d) {
      if (!(p[d] >= lo[d] && p[d] <= hi[d])) return false;
    }
    return true;
  }
  bool operator==(const Box&) const = default;
};

inline Box default_base_region() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{-0.2, -0.2, -inf}, {0.2, 0.2, inf}};
}

struct EnergyParams {
  std::optional<double> tau;  // nullopt: mean of the strictly positive similarity values
  double delta = 0.01;
  double sigma = 1.0;  // in cells
  std::optional<Box> base = default_base_region();
};

namespace detail {
/// Face neighbours in the fixed order -x, +x, -y, +y, -z, +z.
inline int face_neighbors(const GridSpec& s, std::uint64_t id, std::array<std::uint64_t, 6>& out) {
  const CellCoord c = s.coord(id);
  const std::uint64_t sx = static_cast<std::uint64_t>(s.dims[1]) * s.dims[2];
  const std::uint64_t sy = s.dims[2];
  int n = 0;
  if (c.i > 0) out[n++] = id - sx;
  if (c.i + 1 < s.dims[0]) out[n++] = id + sx;
  if (c.j > 0) out[n++] = id - sy;
  if (c.j + 1 < s.dims[1]) out[n++] = id + sy;
  if (c.k > 0) out[n++] = id - 1;
  if (c.k + 1 < s.dims[2]) out[n++] = id + 1;
  return n;
}
}  // namespace detail

inline double auto_tau(std::span<const float> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (float v : values) {
    if (v > 0.0f) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

struct SeedMask {
  std::vector<std::uint8_t> seed;
  double tau = 0.0;
  std::size_t count = 0;
};

/// A cell seeds iff its value is <= tau, its center lies outside the base
/// region, and at least one face neighbour satisfies the same two conditions.
inline SeedMask seed_init(const SimilarityGrid& sim, std::optional<double> tau = std::nullopt,
                          const std::optional<Box>& base = std::nullopt) {
  const GridSpec& s = sim.spec;
  const std::uint64_t n = s.cell_count();
  SeedMask m;
  m.tau = tau ? *tau : auto_tau(sim.values);
  std::vector<std::uint8_t> eligible(n, 0);
  for (std::uint64_t id = 0; id < n; ++id) {
    eligible[id] = sim.values[id] <= m.tau && !(base && base->contains(s.center(s.coord(id))));
  }
  m.seed.assign(n, 0);
  std::array<std::uint64_t, 6> nb{};
  for (std::uint64_t id = 0; id < n; ++id) {
    if (!eligible[id]) continue;
    const int k = detail::face_neighbors(s, id, nb);
    for (int a = 0; a < k; ++a) {
      if (eligible[nb[a]]) {
        m.seed[id] = 1;
        ++m.count;
        break;
      }
    }
  }
  if (m.count == 0) throw NoSeeds("seed_init: no seed cells remain after threshold, base and isolation rules");
  return m;
}

struct Wavefront {
  std::vector<double> field;                // units * delta
  std::vector<double> units;                // the same recursion with delta = 1
  std::vector<std::int32_t> layer;          // 0 for seeds, -1 for cells filled by the fallback pass
  std::vector<std::uint32_t> assignments;   // writes per cell; seeds 0
  std::int32_t layers = 0;                  // index of the last propagated layer
  std::size_t unreachable = 0;
};

/// Synchronous layer propagation: each boundary cell takes the mean of its
/// already-filled face neighbours (summed in face order) plus delta. Cells not
/// connected to any seed receive max + delta. The recursion is linear in delta,
/// so it runs with unit increments and is scaled once; a cell at distance k
/// along a line gets exactly k * delta.
inline Wavefront wavefront_propagate(std::span<const std::uint8_t> seeds, const GridSpec& spec, double delta) {
  const std::uint64_t n = spec.cell_count();
  if (seeds.size() != n) throw std::invalid_argument("wavefront_propagate: seed mask size mismatch");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidParameter("wavefront_propagate: delta must be positive");
  Wavefront w;
  w.units.assign(n, 0.0);
  w.layer.assign(n, -1);
  w.assignments.assign(n, 0);
  std::vector<std::uint64_t> frontier;
  for (std::uint64_t id = 0; id < n; ++id) {
    if (seeds[id]) w.layer[id] = 0;
  }
  for (std::uint64_t id = 0; id < n; ++id) {
    if (seeds[id]) frontier.push_back(id);
  }
  if (frontier.empty()) throw NoSeeds("wavefront_propagate: empty seed mask");

  std::array<std::uint64_t, 6> nb{};
  std::vector<std::uint64_t> boundary;
  for (std::int32_t t = 0;; ++t) {
    // boundary = unfilled cells adjacent to the cells filled in layer t
    boundary.clear();
    for (std::uint64_t id : frontier) {
      const int k = detail::face_neighbors(spec, id, nb);
      for (int a = 0; a < k; ++a) {
        if (w.layer[nb[a]] == -1) {
          w.layer[nb[a]] = t + 1;
          boundary.push_back(nb[a]);
        }
      }
    }
    if (boundary.empty()) break;
    std::sort(boundary.begin(), boundary.end());
    for (std::uint64_t id : boundary) {
      const int k = detail::face_neighbors(spec, id, nb);
      double sum = 0.0;
      int cnt = 0;
      for (int a = 0; a < k; ++a) {
        const std::int32_t l = w.layer[nb[a]];
        if (l >= 0 && l <= t) {
          sum += w.units[nb[a]];
          ++cnt;
        }
      }
      w.units[id] = sum / cnt + 1.0;
      ++w.assignments[id];
    }
    w.layers = t + 1;
    frontier.swap(boundary);
  }

  double mx = 0.0;
  for (std::uint64_t id = 0; id < n; ++id) {
    if (w.layer[id] >= 0) mx = std::max(mx, w.units[id]);
  }
  for (std::uint64_t id = 0; id < n; ++id) {
    if (w.layer[id] == -1) {
      w.units[id] = mx + 1.0;
      ++w.assignments[id];
      ++w.unreachable;
    }
  }
  w.field.resize(n);
  for (std::uint64_t id = 0; id < n; ++id) w.field[id] = w.units[id] * delta;
  return w;
}

/// Normalized 1-D Gaussian weights on [-r, r], r = ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw InvalidParameter("gaussian_kernel: sigma must be >= 0");
  if (sigma == 0.0) return {1.0};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

/// Separable convolution along x, y, z with replicated edges.
inline std::vector<double> gaussian_smooth(std::span<const double> field, const std::array<std::uint32_t, 3>& dims,
                                           double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  std::vector<double> cur(field.begin(), field.end());
  if (k.size() == 1) return cur;
  const int r = static_cast<int>(k.size() / 2);
  const std::array<std::uint64_t, 3> stride{static_cast<std::uint64_t>(dims[1]) * dims[2], dims[2], 1};
  std::vector<double> next(cur.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t len = dims[axis];
    for (std::uint64_t id = 0; id < cur.size(); ++id) {
      const std::int64_t pos = static_cast<std::int64_t>((id / stride[axis]) % dims[axis]);
      const std::uint64_t base = id - static_cast<std::uint64_t>(pos) * stride[axis];
      double acc = 0.0;
      for (int o = -r; o <= r; ++o) {
        const std::int64_t q = std::clamp<std::int64_t>(pos + o, 0, len - 1);
        acc += k[o + r] * cur[base + static_cast<std::uint64_t>(q) * stride[axis]];
      }
      next[id] = acc;
    }
    cur.swap(next);
  }
  return cur;
}

struct EnergyField {
  GridSpec spec;
  std::vector<double> values;  // smoothed
  double tau = 0.0;
  double delta = 0.01;
  double sigma = 1.0;
  std::optional<Box> base;
  // construction record; empty for fields read from disk
  std::vector<std::uint8_t> seeds;
  Wavefront wavefront;
};

inline EnergyField build_energy_field(const SimilarityGrid& sim, const EnergyParams& p = {}) {
  if (!(p.delta > 0.0)) throw InvalidParameter("energy: delta must be positive");
  if (!(p.sigma >= 0.0)) throw InvalidParameter("energy: sigma must be >= 0");
  EnergyField f;
  f.spec = sim.spec;
  f.delta = p.delta;
  f.sigma = p.sigma;
  f.base = p.base;
  SeedMask m = seed_init(sim, p.tau, p.base);
  f.tau = m.tau;
  f.seeds = std::move(m.seed);
  f.wavefront = wavefront_propagate(f.seeds, f.spec, p.delta);
  f.values = gaussian_smooth(f.wavefront.field, f.spec.dims, p.sigma);
  return f;
}

namespace detail {
/// Catmull-Rom weights and their derivatives for nodes i-1..i+2 at t in [0, 1].
inline void catmull_rom(double t, std::array<double, 4>& w, std::array<double, 4>& dw) {
  const double t2 = t * t, t3 = t2 * t;
  w = {0.5 * (-t + 2 * t2 - t3), 0.5 * (2 - 5 * t2 + 3 * t3), 0.5 * (t + 4 * t2 - 3 * t3), 0.5 * (-t2 + t3)};
  dw = {0.5 * (-1 + 4 * t - 3 * t2), 0.5 * (-10 * t + 9 * t2), 0.5 * (1 + 8 * t - 9 * t2), 0.5 * (-2 * t + 3 * t2)};
}

/// Node value along one axis with linear extrapolation beyond the edges.
struct AxisNodes {
  std::array<std::int64_t, 4> idx{};    // clamped indices into the axis
  std::array<double, 4> extra{};        // extrapolation multiples of the edge slope
  std::array<int, 4> side{};            // -1 low edge, +1 high edge, 0 interior
};

inline AxisNodes axis_nodes(std::int64_t i, std::int64_t n) {
  AxisNodes a;
  for (int o = 0; o < 4; ++o) {
    const std::int64_t q = i - 1 + o;
    if (q < 0) {
      a.idx[o] = 0;
      a.extra[o] = static_cast<double>(q);
      a.side[o] = -1;
    } else if (q > n - 1) {
      a.idx[o] = n - 1;
      a.extra[o] = static_cast<double>(q - (n - 1));
      a.side[o] = 1;
    } else {
      a.idx[o] = q;
    }
  }
  return a;
}
}  // namespace detail

struct EnergySample {
  double energy = 0.0;
  Vec3 grad;
};

/// Tricubic Catmull-Rom interpolation through the cell-center values; the
/// interpolant is C1, exact for linear fields, and its derivative at a node is
/// the central difference. Outside the bounds x is clamped and each clamped
/// axis's gradient component points inward with the boundary magnitude.
inline EnergySample energy_at(const EnergyField& f, const Vec3& x) {
  const GridSpec& s = f.spec;
  std::array<double, 3> p{x.x, x.y, x.z};
  std::array<int, 3> clamped{0, 0, 0};
  for (int d = 0; d < 3; ++d) {
    if (p[d] < s.lo[d]) {
      p[d] = s.lo[d];
      clamped[d] = -1;
    } else if (p[d] > s.hi[d]) {
      p[d] = s.hi[d];
      clamped[d] = 1;
    } else if (std::isnan(p[d])) {
      p[d] = 0.5 * (s.lo[d] + s.hi[d]);
    }
  }
  std::array<detail::AxisNodes, 3> nodes;
  std::array<std::array<double, 4>, 3> w{}, dw{};
  for (int d = 0; d < 3; ++d) {
    const std::int64_t n = s.dims[d];
    const double u = (p[d] - s.lo[d]) / s.delta - 0.5;
    const std::int64_t i = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(u)), -1, n - 1);
    detail::catmull_rom(u - static_cast<double>(i), w[d], dw[d]);
    nodes[d] = detail::axis_nodes(i, n);
  }
  const std::uint64_t sx = static_cast<std::uint64_t>(s.dims[1]) * s.dims[2];
  const std::uint64_t sy = s.dims[2];
  auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return f.values[i * sx + j * sy + k]; };
  // value at a possibly virtual node: extrapolate linearly along each off-grid axis in turn
  auto node = [&](int a, int b, int c) {
    std::array<std::int64_t, 3> q{nodes[0].idx[a], nodes[1].idx[b], nodes[2].idx[c]};
    const std::array<int, 3> o{a, b, c};
    double v = at(q[0], q[1], q[2]);
    for (int d = 0; d < 3; ++d) {
      const auto& nd = nodes[d];
      if (nd.side[o[d]] == 0 || s.dims[d] < 2) continue;
      std::array<std::int64_t, 3> qa = q, qb = q;
      if (nd.side[o[d]] < 0) {
        qa[d] = 0;
        qb[d] = 1;
        v += nd.extra[o[d]] * -1.0 * (at(qa[0], qa[1], qa[2]) - at(qb[0], qb[1], qb[2]));
      } else {
        qa[d] = s.dims[d] - 1;
        qb[d] = s.dims[d] - 2;
        v += nd.extra[o[d]] * (at(qa[0], qa[1], qa[2]) - at(qb[0], qb[1], qb[2]));
      }
    }
    return v;
  };
  EnergySample out;
  double gx = 0.0, gy = 0.0, gz = 0.0;
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      for (int c = 0; c < 4; ++c) {
        const double v = node(a, b, c);
        out.energy += w[0][a] * w[1][b] * w[2][c] * v;
        gx += dw[0][a] * w[1][b] * w[2][c] * v;
        gy += w[0][a] * dw[1][b] * w[2][c] * v;
        gz += w[0][a] * w[1][b] * dw[2][c] * v;
      }
    }
  }
  std::array<double, 3> g{gx / s.delta, gy / s.delta, gz / s.delta};
  for (int d = 0; d < 3; ++d) {
    if (clamped[d] != 0) g[d] = -static_cast<double>(clamped[d]) * std::abs(g[d]);
  }
  out.grad = {g[0], g[1], g[2]};
  return out;
}

/// eps + lambda * grad E(x); lambda = 0 returns eps unchanged.
inline Vec3 guided_noise(const Vec3& eps, const Vec3& x, double lambda, const EnergyField& f) {
  if (!(lambda >= 0.0)) throw InvalidParameter("guided_noise: lambda must be >= 0");
  if (lambda == 0.0) return eps;
  return eps + energy_at(f, x).grad * lambda;
}

inline std::vector<Vec3> guided_noise(std::span<const Vec3> eps, std::span<const Vec3> xs, double lambda,
                                      const EnergyField& f) {
  if (eps.size() != xs.size()) throw std::invalid_argument("guided_noise: eps and positions differ in length");
  std::vector<Vec3> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = guided_noise(eps[i], xs[i], lambda, f);
  return out;
}

inline std::vector<std::uint8_t> serialize_energy(const EnergyField& f) {
  io::Writer w;
  w.magic("RNRG");
  w.put(kFormatVersion);
  detail::put_spec(w, f.spec);
  w.put(f.tau);
  w.put(f.delta);
  w.put(f.sigma);
  w.put(static_cast<std::uint8_t>(f.base ? 1 : 0));
  const Box b = f.base.value_or(Box{});
  for (int d = 0; d < 3; ++d) {
    w.put(b.lo[d]);
    w.put(b.hi[d]);
  }
  w.put_all(std::span<const double>(f.values));
  return w.take();
}

inline EnergyField deserialize_energy(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RNRG");
  detail::check_version(r);
  EnergyField f;
  f.spec = detail::get_spec(r);
  f.tau = r.get<double>();
  f.delta = r.get<double>();
  f.sigma = r.get<double>();
  const auto has_base = r.get<std::uint8_t>();
  Box b;
  for (int d = 0; d < 3; ++d) {
    b.lo[d] = r.get<double>();
    b.hi[d] = r.get<double>();
  }
  if (has_base > 1) throw FormatError("RNRG base flag must be 0 or 1");
  if (has_base) f.base = b;
  if (r.remaining() != f.spec.cell_count() * sizeof(double)) throw FormatError("RNRG payload size mismatch");
  f.values.resize(f.spec.cell_count());
  for (auto& v : f.values) v = r.get<double>();
  return f;
}

/// Rows are j (y) from high to low, columns i (x); one slice at index k.
inline std::string dump_z_slice(const EnergyField& f, std::uint32_t k) {
  const GridSpec& s = f.spec;
  if (k >= s.dims[2]) throw InvalidParameter("dump_z_slice: slice index out of range");
  std::ostringstream os;
  os << std::setprecision(6);
  for (std::int64_t j = static_cast<std::int64_t>(s.dims[1]) - 1; j >= 0; --j) {
    for (std::uint32_t i = 0; i < s.dims[0]; ++i) {
      if (i) os << ' ';
      os << f.values[s.linear({i, static_cast<std::uint32_t>(j), k})];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace reachmap
