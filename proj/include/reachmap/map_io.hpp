#pragma once

// RMAP binary map format and its `.meta` text sidecar.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reachmap/binary_io.hpp"
#include "reachmap/grid.hpp"

namespace reachmap {

inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

inline void put_spec(io::Writer& w, const GridSpec& s) {
  for (int d = 0; d < 3; ++d) {
    w.put(s.lo[d]);
    w.put(s.hi[d]);
  }
  w.put(s.delta);
  w.put(s.theta);
  for (auto n : s.dims) w.put(n);
}

/// Reads bounds, cell size, theta and dims; dims must agree with the bounds.
inline GridSpec get_spec(io::Reader& r) {
  std::array<double, 3> lo{}, hi{};
  for (int d = 0; d < 3; ++d) {
    lo[d] = r.get<double>();
    hi[d] = r.get<double>();
  }
  const double delta = r.get<double>();
  const double theta = r.get<double>();
  std::array<std::uint32_t, 3> dims{};
  for (auto& n : dims) n = r.get<std::uint32_t>();
  GridSpec s;
  try {
    s = GridSpec::make(lo, hi, delta, theta);
  } catch (const InvalidParameter& e) {
    throw FormatError(std::string("invalid grid header: ") + e.what());
  }
  if (s.dims != dims) throw FormatError("grid header dims disagree with bounds and cell size");
  return s;
}

inline void check_version(io::Reader& r) {
  const auto v = r.get<std::uint32_t>();
  if (v != kFormatVersion) throw FormatError("unsupported format version " + std::to_string(v));
}

}  // namespace detail

inline constexpr std::uint32_t kFlagWitnesses = 1u << 0;
inline constexpr std::uint32_t kFlagPhi = 1u << 1;

/// Cells are written in ascending id order, so equal maps give equal bytes.
inline std::vector<std::uint8_t> serialize_map(const ReachGrid& grid) {
  io::Writer w;
  w.magic("RMAP");
  w.put(kFormatVersion);
  w.put(kFlagWitnesses | kFlagPhi);
  detail::put_spec(w, grid.spec());
  w.put(grid.dof());
  w.put(static_cast<std::uint64_t>(grid.occupied()));
  for (const std::uint64_t id : grid.sorted_ids()) {
    const Cell& c = *grid.find(id);
    w.put(id);
    w.put(static_cast<std::uint32_t>(c.size()));
    for (std::size_t e = 0; e < c.size(); ++e) w.put_all(c.stored_direction(e));
    for (std::size_t e = 0; e < c.size(); ++e) w.put_all(c.witness(e));
    for (std::size_t e = 0; e < c.size(); ++e) {
      const auto& phi = c.phi(e);
      w.put(static_cast<std::uint16_t>(phi.size()));
      for (const auto& iv : phi) {
        w.put(iv.lo);
        w.put(iv.hi);
      }
    }
  }
  return w.take();
}

/// Rebuilds a map; `inserted` is recomputed from the cells and `generated`
/// defaults to it (the sidecar supplies the real value).
inline ReachGrid deserialize_map(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.expect_magic("RMAP");
  detail::check_version(r);
  const auto flags = r.get<std::uint32_t>();
  if ((flags & ~(kFlagWitnesses | kFlagPhi)) != 0) throw FormatError("unknown RMAP flags");
  const GridSpec spec = detail::get_spec(r);
  const auto dof = r.get<std::uint16_t>();
  const auto occupied = r.get<std::uint64_t>();
  ReachGrid grid(spec, dof);
  std::uint64_t total = 0;
  std::uint64_t prev_id = 0;
  for (std::uint64_t n = 0; n < occupied; ++n) {
    const auto id = r.get<std::uint64_t>();
    if (id >= spec.cell_count()) throw FormatError("cell id out of range");
    if (n > 0 && id <= prev_id) throw FormatError("cell ids not strictly ascending");
    prev_id = id;
    const auto count = r.get<std::uint32_t>();
    if (count == 0) throw FormatError("empty cell record");
    if (static_cast<std::uint64_t>(count) * 12 > r.remaining()) throw FormatError("truncated input");
    std::vector<float> dirs(3 * static_cast<std::size_t>(count));
    for (auto& f : dirs) f = r.get<float>();
    std::vector<float> wit(static_cast<std::size_t>(count) * dof, 0.0f);
    if (flags & kFlagWitnesses) {
      for (auto& f : wit) f = r.get<float>();
    }
    std::vector<std::vector<AngleInterval>> phis(count);
    if (flags & kFlagPhi) {
      for (auto& phi : phis) {
        const auto k = r.get<std::uint16_t>();
        phi.resize(k);
        for (auto& iv : phi) {
          iv.lo = r.get<float>();
          iv.hi = r.get<float>();
        }
      }
    }
    Cell& cell = grid.cell(id);
    for (std::uint32_t e = 0; e < count; ++e) {
      cell.append_raw(std::span<const float>(dirs).subspan(3 * e, 3),
                      std::span<const float>(wit).subspan(static_cast<std::size_t>(e) * dof, dof), std::move(phis[e]));
    }
    total += count;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after RMAP payload");
  grid.add_inserted(total);
  grid.add_generated(total);
  return grid;
}

/// Provenance sidecar written next to a map file.
struct MapMeta {
  std::string chain;
  std::uint64_t seed = 0;
  std::uint64_t generated = 0;
  std::uint64_t inserted = 0;
  double build_seconds = 0.0;
};

inline std::string meta_path(const std::string& map_path) {
  return std::filesystem::path(map_path).replace_extension(".meta").string();
}

inline std::string format_meta(const MapMeta& m) {
  std::ostringstream os;
  os.precision(17);
  os << "chain=" << m.chain << "\nseed=" << m.seed << "\ngenerated=" << m.generated << "\ninserted=" << m.inserted
     << "\nbuild_seconds=" << m.build_seconds << "\n";
  return os.str();
}

inline MapMeta parse_meta(const std::string& text) {
  MapMeta m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "chain") m.chain = val;
      else if (key == "seed") m.seed = std::stoull(val);
      else if (key == "generated") m.generated = std::stoull(val);
      else if (key == "inserted") m.inserted = std::stoull(val);
      else if (key == "build_seconds") m.build_seconds = std::stod(val);
    } catch (const std::exception&) {
      throw FormatError("bad meta value for '" + key + "'");
    }
  }
  return m;
}

inline void save_map(const ReachGrid& grid, const std::string& path, const std::optional<MapMeta>& meta = std::nullopt) {
  io::write_file(path, serialize_map(grid));
  if (meta) {
    std::ofstream out(meta_path(path), std::ios::trunc);
    if (!out) throw FormatError("cannot write meta sidecar for '" + path + "'");
    out << format_meta(*meta);
  }
}

/// Loads a map and, when a sidecar exists, restores its generated counter.
inline ReachGrid load_map(const std::string& path) {
  ReachGrid grid = deserialize_map(io::read_file(path));
  const std::string mp = meta_path(path);
  if (std::filesystem::exists(mp)) {
    std::ifstream in(mp);
    std::stringstream ss;
    ss << in.rdbuf();
    const MapMeta m = parse_meta(ss.str());
    if (m.generated >= grid.inserted()) grid.set_generated(m.generated);
  }
  return grid;
}

}  // namespace reachmap
