#pragma once

// Map construction: producer threads sample FK poses into an ordered bounded
// queue; one consumer inserts them batch by batch with two-phase conflict
// resolution and adapts the batch size until the map saturates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "reachmap/bounded_queue.hpp"
#include "reachmap/grid.hpp"
#include "reachmap/kinematics.hpp"

namespace reachmap {

struct BatchReport {
  std::uint64_t ordinal = 0;
  std::uint64_t generated = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t out_of_bounds = 0;
  double rate = 0.0;
  std::uint64_t cumulative = 0;
  double batch_seconds = 0.0;
  double elapsed_seconds = 0.0;
};

struct VoxelGroup {
  std::uint64_t cell = 0;
  std::vector<std::uint32_t> members;  // indices into the batch, temporal order
};

struct Grouping {
  std::vector<VoxelGroup> groups;  // ascending cell id
  std::uint64_t out_of_bounds = 0;
};

/// Stable bucketing of a batch by destination cell.
inline Grouping group_by_voxel(const GridSpec& spec, std::span<const SampledPose> batch) {
  Grouping g;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed;
  keyed.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (auto id = cell_id(spec, batch[i].pose.t)) {
      keyed.emplace_back(*id, static_cast<std::uint32_t>(i));
    } else {
      ++g.out_of_bounds;
    }
  }
  // (id, index) pairs are unique, so an unstable sort on both keys is stable in index
  std::sort(keyed.begin(), keyed.end());
  for (const auto& [id, idx] : keyed) {
    if (g.groups.empty() || g.groups.back().cell != id) g.groups.push_back({id, {}});
    g.groups.back().members.push_back(idx);
  }
  return g;
}

/// mask[i] is true iff candidate i keeps distance >= theta from every stored entry.
inline std::vector<bool> phase1_filter(const Cell& cell, std::span<const UnitVec3> candidates, double theta) {
  std::vector<bool> mask(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Nearest n = cell.nearest(canonical_direction(candidates[i].vec()).unit);
    mask[i] = !n.found() || n.angle >= theta;
  }
  return mask;
}

/// First-come greedy selection among candidates; returns accepted positions.
inline std::vector<std::size_t> phase2_greedy(std::span<const UnitVec3> candidates, double theta) {
  Cell scratch(0);
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (std::holds_alternative<Inserted>(try_insert(scratch, candidates[i], {}, theta))) accepted.push_back(i);
  }
  return accepted;
}

/// Inserts a batch; the resulting grid equals applying insert_sequential to the
/// batch in order.
inline BatchReport insert_batch(ReachGrid& grid, std::span<const SampledPose> batch) {
  BatchReport rep;
  rep.generated = batch.size();
  grid.add_generated(batch.size());
  const double theta = grid.spec().theta;
  const Grouping grouping = group_by_voxel(grid.spec(), batch);
  rep.out_of_bounds = grouping.out_of_bounds;

  std::vector<CanonicalDirection> dirs;
  std::vector<Nearest> old_nearest;
  for (const VoxelGroup& group : grouping.groups) {
    Cell& cell = grid.cell(group.cell);
    const std::size_t old_size = cell.size();
    const std::size_t n = group.members.size();
    dirs.resize(n);
    old_nearest.resize(n);
    // phase 1: every candidate against the entries present before this batch
    for (std::size_t c = 0; c < n; ++c) {
      dirs[c] = canonical_direction(approach_direction(batch[group.members[c]].pose.q).vec());
      old_nearest[c] = cell.nearest_in(dirs[c].unit, 0, old_size);
    }
    // phase 2: survivors against entries accepted earlier in this batch
    for (std::size_t c = 0; c < n; ++c) {
      const JointConfig& config = batch[group.members[c]].joints;
      const Nearest& n1 = old_nearest[c];
      const Nearest n2 = cell.nearest_in(dirs[c].unit, old_size, cell.size());
      const bool survived = !n1.found() || n1.angle >= theta;
      if (survived && !(n2.found() && n2.angle < theta)) {
        cell.append(dirs[c], config, initial_phi(config));
        ++rep.accepted;
        continue;
      }
      const Nearest& nearest = (n2.found() && n2.angle < n1.angle) ? n2 : n1;
      merge_wrist_angle(cell.phi(nearest.index), wrist_angle(config));
      ++rep.rejected;
    }
  }
  grid.add_inserted(rep.accepted);
  rep.rate = rep.generated == 0 ? 0.0 : static_cast<double>(rep.accepted) / static_cast<double>(rep.generated);
  rep.cumulative = grid.inserted();
  return rep;
}

/// Cube centered on the chain base with half-width max reach + delta.
inline GridSpec default_workspace(const KinematicChain& chain, double delta, double theta) {
  const Vec3 b = chain.base_point();
  const double h = chain.max_reach() + delta;
  return GridSpec::make({b.x - h, b.y - h, b.z - h}, {b.x + h, b.y + h, b.z + h}, delta, theta);
}

struct BuildConfig {
  const KinematicChain* chain = nullptr;
  GridSpec spec;
  std::uint64_t target = 1'000'000;
  double stop_rate = 0.01;
  std::size_t workers = 1;  // 0: the consumer samples stream (seed, 0) itself
  std::size_t batch = 10'000;
  std::size_t max_batch = 1'000'000;
  std::size_t sub_batch = 10'000;
  std::size_t queue_capacity = 8;
  std::uint64_t seed = 0;
  double target_rate = 0.25;
  std::size_t smoothing = 3;
  std::uint64_t max_batches = 0;  // 0: unlimited
  std::function<void(const BatchReport&)> on_batch;

  void validate() const {
    if (chain == nullptr) throw InvalidParameter("build: no chain");
    if (!(stop_rate > 0.0 && stop_rate < 1.0)) throw InvalidParameter("build: stop rate must lie in (0, 1)");
    if (batch == 0 || sub_batch == 0 || max_batch == 0) throw InvalidParameter("build: batch sizes must be >= 1");
    if (max_batch < batch) throw InvalidParameter("build: max batch below initial batch");
    if (!(target_rate > 0.0)) throw InvalidParameter("build: target rate must be positive");
    if (workers > 256) throw InvalidParameter("build: at most 256 workers");
    if (smoothing == 0) throw InvalidParameter("build: smoothing window must be >= 1");
  }
};

/// Growth factor target_rate / last_rate clamped to [1, 4]; never shrinks.
inline std::size_t adapt_batch_size(std::size_t current, double last_rate, std::size_t max_batch,
                                    double target_rate = 0.25) {
  const double factor = last_rate <= 0.0 ? 4.0 : std::clamp(target_rate / last_rate, 1.0, 4.0);
  const double grown = std::floor(static_cast<double>(current) * factor);
  return static_cast<std::size_t>(std::min(static_cast<double>(max_batch), grown));
}

enum class StopReason { kTarget, kSaturated, kBatchLimit, kTruncated };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kTarget: return "target";
    case StopReason::kSaturated: return "saturated";
    case StopReason::kBatchLimit: return "batch-limit";
    case StopReason::kTruncated: return "truncated";
  }
  return "?";
}

struct BuildResult {
  ReachGrid grid;
  std::vector<BatchReport> reports;
  StopReason reason = StopReason::kTarget;
  bool truncated = false;
  std::string diagnostic;
  double seconds = 0.0;
};

/// Smoothed rate over the last `window` reports.
inline double smoothed_rate(std::span<const BatchReport> reports, std::size_t window = 3) {
  if (reports.empty()) return 0.0;
  const std::size_t k = std::min(window, reports.size());
  double s = 0.0;
  for (std::size_t i = reports.size() - k; i < reports.size(); ++i) s += reports[i].rate;
  return s / static_cast<double>(k);
}

/// Runs the pipeline until `target` entries are stored or the smoothed
/// insertion rate falls below `stop_rate`. The returned grid is frozen. For a
/// fixed worker count the result is a pure function of the config.
inline BuildResult build_map(const BuildConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  BuildResult res;
  res.grid = ReachGrid(cfg.spec, static_cast<std::uint16_t>(cfg.chain->dof()));
  if (cfg.target == 0) {
    res.grid.freeze();
    return res;
  }

  struct Item {
    std::vector<SampledPose> poses;
    std::string error;
  };
  OrderedBoundedQueue<Item> queue(cfg.queue_capacity);
  std::vector<std::thread> producers;
  const std::size_t W = cfg.workers;
  for (std::size_t w = 0; w < W; ++w) {
    producers.emplace_back([&, w] {
      std::optional<PoseSampler> sampler;
      for (std::uint64_t k = 0;; ++k) {
        const std::uint64_t ticket = k * W + w;
        Item item;
        try {
          if (!sampler) sampler.emplace(*cfg.chain, cfg.seed, w);
          item.poses = sampler->next_batch(cfg.sub_batch);
        } catch (const std::exception& e) {
          item.error = "worker " + std::to_string(w) + ": " + e.what();
        }
        const bool failed = !item.error.empty();
        if (!queue.push(ticket, std::move(item)) || failed) return;
      }
    });
  }

  std::optional<PoseSampler> local;
  auto next_sub_batch = [&]() -> Item {
    if (W > 0) {
      auto item = queue.pop();
      if (!item) return {{}, "queue closed unexpectedly"};
      return std::move(*item);
    }
    try {
      if (!local) local.emplace(*cfg.chain, cfg.seed, 0);
      return {local->next_batch(cfg.sub_batch), {}};
    } catch (const std::exception& e) {
      return {{}, e.what()};
    }
  };

  std::size_t batch_size = cfg.batch;
  std::vector<SampledPose> batch;
  for (std::uint64_t ordinal = 0;; ++ordinal) {
    const std::size_t subs = (batch_size + cfg.sub_batch - 1) / cfg.sub_batch;
    batch.clear();
    std::string error;
    for (std::size_t s = 0; s < subs; ++s) {
      Item item = next_sub_batch();
      if (!item.error.empty()) {
        error = std::move(item.error);
        break;
      }
      std::move(item.poses.begin(), item.poses.end(), std::back_inserter(batch));
    }
    if (!error.empty()) {
      res.truncated = true;
      res.reason = StopReason::kTruncated;
      res.diagnostic = std::move(error);
      break;
    }
    const auto tb = std::chrono::steady_clock::now();
    BatchReport rep = insert_batch(res.grid, batch);
    rep.ordinal = ordinal;
    rep.batch_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tb).count();
    rep.elapsed_seconds = elapsed();
    res.reports.push_back(rep);
    if (cfg.on_batch) cfg.on_batch(rep);

    if (res.grid.inserted() >= cfg.target) {
      res.reason = StopReason::kTarget;
      break;
    }
    if (smoothed_rate(res.reports, cfg.smoothing) < cfg.stop_rate) {
      res.reason = StopReason::kSaturated;
      break;
    }
    if (cfg.max_batches != 0 && ordinal + 1 >= cfg.max_batches) {
      res.reason = StopReason::kBatchLimit;
      break;
    }
    batch_size = adapt_batch_size(batch_size, rep.rate, cfg.max_batch, cfg.target_rate);
  }

  queue.close();
  for (auto& t : producers) t.join();
  res.grid.freeze();
  res.seconds = elapsed();
  return res;
}

}  // namespace reachmap
