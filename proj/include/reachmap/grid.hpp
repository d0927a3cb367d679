#pragma once

// The reachability map: voxel indexing, per-cell direction sets with geodesic
// separation, and (batched) queries.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "reachmap/error.hpp"
#include "reachmap/geometry.hpp"
#include "reachmap/kinematics.hpp"

namespace reachmap {

struct CellCoord {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint32_t k = 0;
  bool operator==(const CellCoord&) const = default;
};

/// Workspace box, cell size and angular threshold. Cells are numbered x-major:
/// id = (i * ny + j) * nz + k.
struct GridSpec {
  std::array<double, 3> lo{-1.0, -1.0, -1.0};
  std::array<double, 3> hi{1.0, 1.0, 1.0};
  double delta = 0.05;
  double theta = 0.1;
  std::array<std::uint32_t, 3> dims{40, 40, 40};

  static GridSpec make(std::array<double, 3> lo, std::array<double, 3> hi, double delta, double theta) {
    GridSpec s;
    s.lo = lo;
    s.hi = hi;
    s.delta = delta;
    s.theta = theta;
    if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidParameter("grid: cell size must be positive");
    if (!(theta > 0.0) || !(theta < std::numbers::pi)) throw InvalidParameter("grid: theta must lie in (0, pi)");
    for (int d = 0; d < 3; ++d) {
      if (!(lo[d] < hi[d])) throw InvalidParameter("grid: bounds require min < max on every axis");
      const double cells = (hi[d] - lo[d]) / delta;
      // absorb representation error in ratios such as 2.1 / 0.05
      const double n = std::ceil(cells - 1e-9 * std::max(1.0, cells));
      if (n > 1e6) throw InvalidParameter("grid: more than 1e6 cells along one axis");
      s.dims[d] = static_cast<std::uint32_t>(std::max(1.0, n));
    }
    return s;
  }

  static GridSpec cube(double half_extent, double delta, double theta) {
    return make({-half_extent, -half_extent, -half_extent}, {half_extent, half_extent, half_extent}, delta, theta);
  }

  std::uint64_t cell_count() const {
    return static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2];
  }
  std::uint64_t linear(const CellCoord& c) const {
    return (static_cast<std::uint64_t>(c.i) * dims[1] + c.j) * dims[2] + c.k;
  }
  CellCoord coord(std::uint64_t id) const {
    const auto k = static_cast<std::uint32_t>(id % dims[2]);
    id /= dims[2];
    const auto j = static_cast<std::uint32_t>(id % dims[1]);
    return {static_cast<std::uint32_t>(id / dims[1]), j, k};
  }
  Vec3 center(const CellCoord& c) const {
    return {lo[0] + (c.i + 0.5) * delta, lo[1] + (c.j + 0.5) * delta, lo[2] + (c.k + 0.5) * delta};
  }
  bool contains(const Vec3& t) const {
    for (int d = 0; d < 3; ++d) {
      if (!(t[d] >= lo[d] && t[d] <= hi[d])) return false;
    }
    return true;
  }

  bool operator==(const GridSpec&) const = default;
};

/// Voxel of t; nullopt outside the closed box. A coordinate equal to the upper
/// bound lands in the last cell.
inline std::optional<CellCoord> cell_index(const GridSpec& spec, const Vec3& t) {
  std::array<std::uint32_t, 3> idx{};
  for (int d = 0; d < 3; ++d) {
    const double v = t[d];
    if (!(v >= spec.lo[d] && v <= spec.hi[d])) return std::nullopt;
    const double f = std::floor((v - spec.lo[d]) / spec.delta);
    idx[d] = f >= static_cast<double>(spec.dims[d]) ? spec.dims[d] - 1 : static_cast<std::uint32_t>(std::max(0.0, f));
  }
  return CellCoord{idx[0], idx[1], idx[2]};
}

inline std::optional<std::uint64_t> cell_id(const GridSpec& spec, const Vec3& t) {
  auto c = cell_index(spec, t);
  if (!c) return std::nullopt;
  return spec.linear(*c);
}

/// Stored directions are single precision. Every geometric decision uses the
/// double-precision normalization of the stored floats, so a direction read back
/// from disk behaves exactly like the one that was inserted.
struct CanonicalDirection {
  std::array<float, 3> stored{};
  Vec3 unit;
};

inline CanonicalDirection canonical_direction(const Vec3& v) {
  CanonicalDirection c;
  c.stored = {static_cast<float>(v.x), static_cast<float>(v.y), static_cast<float>(v.z)};
  // GCC 11 SLP folds a vectorized double->float->double round trip into the
  // identity; the widening goes through memory the optimizer cannot see through.
  volatile float wide[3] = {c.stored[0], c.stored[1], c.stored[2]};
  const Vec3 d{wide[0], wide[1], wide[2]};
  c.unit = d * (1.0 / norm(d));
  return c;
}

struct AngleInterval {
  float lo = 0.0f;
  float hi = 0.0f;
  bool operator==(const AngleInterval&) const = default;
};

inline constexpr double kWristMergeTolerance = 0.05;

/// Unions the degenerate interval [phi, phi] into a sorted, disjoint list,
/// merging every interval that lies within `tol` of phi.
inline void merge_wrist_angle(std::vector<AngleInterval>& phi, double angle, double tol = kWristMergeTolerance) {
  const float a = static_cast<float>(std::clamp(angle, -std::numbers::pi, std::numbers::pi));
  AngleInterval merged{a, a};
  auto first = std::lower_bound(phi.begin(), phi.end(), static_cast<double>(a) - tol,
                                [](const AngleInterval& iv, double x) { return static_cast<double>(iv.hi) < x; });
  auto last = first;
  while (last != phi.end() && static_cast<double>(last->lo) <= static_cast<double>(a) + tol) {
    merged.lo = std::min(merged.lo, last->lo);
    merged.hi = std::max(merged.hi, last->hi);
    ++last;
  }
  first = phi.erase(first, last);
  phi.insert(first, merged);
}

/// Wrist twist of a configuration: the last joint turns about the approach axis.
inline double wrist_angle(std::span<const double> config) { return config.empty() ? 0.0 : config.back(); }

struct Nearest {
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t index = npos;
  double angle = std::numeric_limits<double>::infinity();
  bool found() const { return index != npos; }
};

/// Direction set of one voxel: stored float directions, one witness and a
/// wrist-rotation interval list per entry.
class Cell {
 public:
  Cell() = default;
  explicit Cell(std::uint16_t dof) : dof_(dof) {}

  std::size_t size() const { return unit_.size(); }
  bool empty() const { return unit_.empty(); }
  std::uint16_t dof() const { return dof_; }

  UnitVec3 direction(std::size_t i) const { return UnitVec3(unit_[i]); }
  const Vec3& unit(std::size_t i) const { return unit_[i]; }
  std::span<const float> stored_direction(std::size_t i) const { return {dirs_.data() + 3 * i, 3}; }
  std::span<const float> witness(std::size_t i) const { return {witness_.data() + dof_ * i, dof_}; }
  const std::vector<AngleInterval>& phi(std::size_t i) const { return phi_[i]; }
  std::vector<AngleInterval>& phi(std::size_t i) { return phi_[i]; }

  /// Entry with the smallest geodesic distance to `q` (first index on ties).
  Nearest nearest(const Vec3& q) const {
    Nearest best;
    if (unit_.empty()) return best;
    double best_dot = -2.0;
    for (const Vec3& u : unit_) best_dot = std::max(best_dot, dot(q, u));
    // only entries whose dot is within rounding of the maximum can be the argmin
    const double floor_dot = best_dot - 1e-12;
    for (std::size_t i = 0; i < unit_.size(); ++i) {
      if (dot(q, unit_[i]) < floor_dot) continue;
      const double a = angle_between(q, unit_[i]);
      if (a < best.angle) best = {static_cast<std::uint32_t>(i), a};
    }
    return best;
  }

  /// Same search restricted to entries [begin, end).
  Nearest nearest_in(const Vec3& q, std::size_t begin, std::size_t end) const {
    Nearest best;
    if (begin >= end) return best;
    double best_dot = -2.0;
    for (std::size_t i = begin; i < end; ++i) best_dot = std::max(best_dot, dot(q, unit_[i]));
    const double floor_dot = best_dot - 1e-12;
    for (std::size_t i = begin; i < end; ++i) {
      if (dot(q, unit_[i]) < floor_dot) continue;
      const double a = angle_between(q, unit_[i]);
      if (a < best.angle) best = {static_cast<std::uint32_t>(i), a};
    }
    return best;
  }

  std::uint32_t append(const CanonicalDirection& dir, std::span<const double> witness,
                       std::vector<AngleInterval> phi) {
    dirs_.insert(dirs_.end(), dir.stored.begin(), dir.stored.end());
    unit_.push_back(dir.unit);
    for (std::size_t d = 0; d < dof_; ++d) witness_.push_back(d < witness.size() ? static_cast<float>(witness[d]) : 0.0f);
    phi_.push_back(std::move(phi));
    return static_cast<std::uint32_t>(unit_.size() - 1);
  }

  /// Loader path: raw floats exactly as serialized.
  void append_raw(std::span<const float> dir, std::span<const float> witness, std::vector<AngleInterval> phi) {
    dirs_.insert(dirs_.end(), dir.begin(), dir.end());
    const Vec3 d{dir[0], dir[1], dir[2]};
    const double n = norm(d);
    if (!(n > 0.0) || !std::isfinite(n)) throw FormatError("map: zero or non-finite stored direction");
    unit_.push_back(d * (1.0 / n));
    for (std::size_t k = 0; k < dof_; ++k) witness_.push_back(k < witness.size() ? witness[k] : 0.0f);
    phi_.push_back(std::move(phi));
  }

 private:
  std::uint16_t dof_ = 0;
  std::vector<float> dirs_;
  std::vector<Vec3> unit_;
  std::vector<float> witness_;
  std::vector<std::vector<AngleInterval>> phi_;
};

struct Inserted {
  std::uint32_t index = 0;
};
struct Rejected {
  std::uint32_t nearest_entry_index = 0;
  double distance = 0.0;
};
using InsertOutcome = std::variant<Inserted, Rejected>;

/// Phi list a new entry starts with: the twist of its own witness.
inline std::vector<AngleInterval> initial_phi(std::span<const double> witness) {
  std::vector<AngleInterval> phi;
  if (!witness.empty()) merge_wrist_angle(phi, wrist_angle(witness));
  return phi;
}

/// Appends `dir` unless some stored direction lies closer than theta.
inline InsertOutcome try_insert(Cell& cell, const CanonicalDirection& dir, std::span<const double> witness,
                                double theta) {
  const Nearest n = cell.nearest(dir.unit);
  if (n.found() && n.angle < theta) return Rejected{n.index, n.angle};
  return Inserted{cell.append(dir, witness, initial_phi(witness))};
}

inline InsertOutcome try_insert(Cell& cell, const UnitVec3& v, std::span<const double> witness, double theta) {
  return try_insert(cell, canonical_direction(v.vec()), witness, theta);
}

struct MapStats {
  double occupancy = 0.0;
  double mean_entries = 0.0;
  std::uint64_t occupied_cells = 0;
  std::uint64_t inserted = 0;
  std::uint64_t generated = 0;
  double insertion_rate = 0.0;
};

/// Sparse voxel map. Single writer while building; immutable after freeze().
class ReachGrid {
 public:
  ReachGrid() = default;
  ReachGrid(GridSpec spec, std::uint16_t dof) : spec_(spec), dof_(dof) {}
  ReachGrid(const ReachGrid& o)
      : spec_(o.spec_), dof_(o.dof_), cells_(o.cells_), generated_(o.generated_), inserted_(o.inserted_) {
    if (o.frozen_) freeze();
  }
  ReachGrid(ReachGrid&&) noexcept = default;
  ReachGrid& operator=(const ReachGrid& o) {
    if (this != &o) *this = ReachGrid(o);
    return *this;
  }
  ReachGrid& operator=(ReachGrid&&) noexcept = default;

  const GridSpec& spec() const { return spec_; }
  std::uint16_t dof() const { return dof_; }
  std::uint64_t generated() const { return generated_; }
  std::uint64_t inserted() const { return inserted_; }
  std::size_t occupied() const { return cells_.size(); }
  bool frozen() const { return frozen_; }

  const Cell* find(std::uint64_t id) const {
    if (frozen_ && !dense_.empty()) {
      const std::uint32_t s = dense_[id];
      return s == 0 ? nullptr : ordered_[s - 1];
    }
    auto it = cells_.find(id);
    return it == cells_.end() ? nullptr : &it->second;
  }

  /// Mutable access for the insertion paths; creates the cell if absent.
  Cell& cell(std::uint64_t id) {
    require_mutable();
    return cells_.try_emplace(id, dof_).first->second;
  }

  void add_generated(std::uint64_t n) {
    require_mutable();
    generated_ += n;
  }
  void add_inserted(std::uint64_t n) {
    require_mutable();
    inserted_ += n;
  }
  void set_generated(std::uint64_t n) { generated_ = n; }

  /// Occupied cell ids in ascending order.
  std::vector<std::uint64_t> sorted_ids() const {
    std::vector<std::uint64_t> ids;
    ids.reserve(cells_.size());
    for (const auto& [id, c] : cells_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  const std::unordered_map<std::uint64_t, Cell>& cells() const { return cells_; }

  void freeze() {
    if (frozen_) return;
    frozen_ = true;
    ordered_.clear();
    const auto ids = sorted_ids();
    ordered_ids_ = ids;
    for (auto id : ids) ordered_.push_back(&cells_.at(id));
    if (spec_.cell_count() <= (std::uint64_t{1} << 27)) {
      dense_.assign(spec_.cell_count(), 0);
      for (std::size_t s = 0; s < ids.size(); ++s) dense_[ids[s]] = static_cast<std::uint32_t>(s + 1);
    }
  }

  /// Slot (1-based position in ascending id order) of a frozen cell, 0 if empty.
  std::uint32_t slot(std::uint64_t id) const {
    if (!dense_.empty()) return dense_[id];
    auto it = std::lower_bound(ordered_ids_.begin(), ordered_ids_.end(), id);
    return (it != ordered_ids_.end() && *it == id) ? static_cast<std::uint32_t>(it - ordered_ids_.begin() + 1) : 0;
  }
  const Cell& slot_cell(std::uint32_t s) const { return *ordered_[s - 1]; }
  std::uint64_t slot_id(std::uint32_t s) const { return ordered_ids_[s - 1]; }

 private:
  void require_mutable() const {
    if (frozen_) throw std::logic_error("ReachGrid is frozen");
  }

  GridSpec spec_;
  std::uint16_t dof_ = 0;
  std::unordered_map<std::uint64_t, Cell> cells_;
  std::uint64_t generated_ = 0;
  std::uint64_t inserted_ = 0;
  bool frozen_ = false;
  std::vector<std::uint32_t> dense_;
  std::vector<const Cell*> ordered_;
  std::vector<std::uint64_t> ordered_ids_;
};

enum class InsertStatus { kInserted, kRejected, kOutOfBounds };

/// One-at-a-time insertion of a sampled pose with rotation tracking on
/// rejection. This is the reference semantics the batched path must reproduce.
inline InsertStatus insert_sequential(ReachGrid& grid, std::span<const double> config, const Pose& pose) {
  grid.add_generated(1);
  const auto id = cell_id(grid.spec(), pose.t);
  if (!id) return InsertStatus::kOutOfBounds;
  Cell& cell = grid.cell(*id);
  const auto outcome = try_insert(cell, approach_direction(pose.q), config, grid.spec().theta);
  if (std::holds_alternative<Inserted>(outcome)) {
    grid.add_inserted(1);
    return InsertStatus::kInserted;
  }
  merge_wrist_angle(cell.phi(std::get<Rejected>(outcome).nearest_entry_index), wrist_angle(config));
  return InsertStatus::kRejected;
}

struct QueryHit {
  std::span<const float> witness;
  double angular_error = 0.0;
  std::uint64_t cell = 0;
  std::uint32_t entry = 0;

  JointConfig witness_config() const { return {witness.begin(), witness.end()}; }
};

using QueryResult = std::optional<QueryHit>;

namespace detail {
inline QueryResult resolve(const Cell& cell, std::uint64_t id, const Vec3& dir, double theta) {
  const Nearest n = cell.nearest(dir);
  if (!n.found() || !(n.angle < theta)) return std::nullopt;
  return QueryHit{cell.witness(n.index), n.angle, id, n.index};
}
}  // namespace detail

/// Reachable iff the pose's cell holds a direction closer than theta to the
/// pose's approach direction.
inline QueryResult query(const ReachGrid& grid, const Pose& pose) {
  const auto id = cell_id(grid.spec(), pose.t);
  if (!id) return std::nullopt;
  const Cell* cell = grid.find(*id);
  if (cell == nullptr) return std::nullopt;
  return detail::resolve(*cell, *id, canonical_direction(approach_direction(pose.q).vec()).unit, grid.spec().theta);
}

struct BatchQueryResult {
  std::vector<QueryResult> results;
  double total_us = 0.0;
  double per_query_us = 0.0;
};

/// Queries per tile in batch_query; a tile's results and directions stay cache resident.
inline constexpr std::size_t kQueryTile = 4096;

/// Order-preserving batched query. Poses are processed in tiles; within a tile
/// they are bucketed by cell so each cell's direction array is scanned for a
/// contiguous run of queries.
inline BatchQueryResult batch_query(const ReachGrid& grid, std::span<const Pose> poses) {
  BatchQueryResult out;
  const std::size_t n = poses.size();
  if (n == 0) return out;
  const auto t0 = std::chrono::steady_clock::now();
  out.results.resize(n);
  const GridSpec& spec = grid.spec();
  const double theta = spec.theta;
  const bool frozen = grid.frozen();

  struct Item {
    std::uint64_t key;  // slot when frozen, cell id otherwise
    std::uint32_t index;
    Vec3 dir;
  };
  std::vector<Item> items, sorted;
  std::vector<std::uint32_t> start;
  items.reserve(std::min(n, kQueryTile));

  for (std::size_t base = 0; base < n; base += kQueryTile) {
    const std::size_t end = std::min(n, base + kQueryTile);
    items.clear();
    for (std::size_t i = base; i < end; ++i) {
      const auto id = cell_id(spec, poses[i].t);
      if (!id) continue;
      std::uint64_t key;
      if (frozen) {
        key = grid.slot(*id);
        if (key == 0) continue;
      } else {
        if (grid.find(*id) == nullptr) continue;
        key = *id;
      }
      items.push_back({key, static_cast<std::uint32_t>(i), canonical_direction(approach_direction(poses[i].q).vec()).unit});
    }

    if (frozen && items.size() * 4 >= grid.occupied()) {
      // counting sort over occupied slots, stable
      start.assign(grid.occupied() + 2, 0);
      for (const Item& it : items) ++start[it.key + 1];
      for (std::size_t s = 1; s < start.size(); ++s) start[s] += start[s - 1];
      sorted.resize(items.size());
      for (const Item& it : items) sorted[start[it.key]++] = it;
    } else {
      sorted = items;
      std::stable_sort(sorted.begin(), sorted.end(), [](const Item& a, const Item& b) { return a.key < b.key; });
    }

    for (std::size_t g = 0; g < sorted.size();) {
      const std::uint64_t key = sorted[g].key;
      const Cell* cell;
      std::uint64_t id;
      if (frozen) {
        cell = &grid.slot_cell(static_cast<std::uint32_t>(key));
        id = grid.slot_id(static_cast<std::uint32_t>(key));
      } else {
        id = key;
        cell = grid.find(key);
      }
      std::size_t e = g;
      for (; e < sorted.size() && sorted[e].key == key; ++e) {
        out.results[sorted[e].index] = detail::resolve(*cell, id, sorted[e].dir, theta);
      }
      g = e;
    }
  }

  const auto t1 = std::chrono::steady_clock::now();
  out.total_us = std::chrono::duration<double, std::micro>(t1 - t0).count();
  out.per_query_us = out.total_us / static_cast<double>(n);
  return out;
}

inline MapStats stats(const ReachGrid& grid) {
  MapStats s;
  s.occupied_cells = grid.occupied();
  s.inserted = grid.inserted();
  s.generated = grid.generated();
  s.occupancy = static_cast<double>(s.occupied_cells) / static_cast<double>(grid.spec().cell_count());
  s.mean_entries = s.occupied_cells == 0 ? 0.0 : static_cast<double>(s.inserted) / static_cast<double>(s.occupied_cells);
  s.insertion_rate = s.generated == 0 ? 0.0 : static_cast<double>(s.inserted) / static_cast<double>(s.generated);
  return s;
}

}  // namespace reachmap
