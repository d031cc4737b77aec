#pragma once

// Correlation-engine throughput on synthetic community data.

#include <chrono>
#include <cstdint>

#include "voxgraph/pcc.hpp"
#include "voxgraph/synthgen.hpp"

namespace voxgraph {

struct BenchReport {
  std::size_t n = 0;
  std::uint32_t t = 0;
  unsigned workers = 0;
  std::size_t tile = 0;
  std::uint64_t pair_count = 0;
  std::size_t edge_count = 0;
  double mean_degree = 0;
  double wall_time_seconds = 0;  // threshold-and-merge only, excludes data generation
  double pairs_per_second = 0;
};

/// Communities of 101 voxels at rho 0.95 keep the mean degree near 100.
inline BenchReport bench(std::size_t voxels, std::uint32_t t, unsigned workers = 0, std::size_t tile = 512,
                         std::uint64_t seed = 7) {
  const VoxelSet vs = synth::community_voxels(voxels, t, 101, 0.95, seed);
  PccConfig cfg;
  cfg.tile_size = tile;
  cfg.workers = workers;
  const auto t0 = std::chrono::steady_clock::now();
  const BrainGraph g = correlate_all(vs, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  BenchReport r;
  r.n = voxels;
  r.t = t;
  r.workers = resolve_workers(workers);
  r.tile = tile;
  r.pair_count = pair_count(voxels);
  r.edge_count = g.edges.size();
  r.mean_degree = degree_report(g).mean_degree;
  r.wall_time_seconds = secs;
  r.pairs_per_second = secs > 0 ? double(r.pair_count) / secs : 0;
  return r;
}

}  // namespace voxgraph
