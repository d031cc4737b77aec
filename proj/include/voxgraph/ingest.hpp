#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "voxgraph/core_types.hpp"
#include "voxgraph/formats.hpp"
#include "voxgraph/parallel.hpp"

namespace voxgraph {

struct IngestConfig {
  /// A voxel is signal-free when its population variance is <= this value.
  double dead_voxel_epsilon = 1e-12;
  std::optional<std::filesystem::path> mask_path;
  unsigned workers = 1;
};

/// Population mean and variance (divide by T), two-pass.
template <typename T>
std::pair<double, double> mean_and_variance(std::span<const T> xs) {
  double mean = 0.0;
  for (T x : xs) mean += double(x);
  mean /= double(xs.size());
  double ss = 0.0;
  for (T x : xs) {
    const double d = double(x) - mean;
    ss += d * d;
  }
  return {mean, ss / double(xs.size())};
}

/// Zero-mean, unit population variance copy of `series`; std::nullopt when the
/// variance is <= epsilon, which tells the caller to drop the voxel.
template <typename T>
std::optional<std::vector<double>> zscore(std::span<const T> series, double epsilon = 0.0) {
  if (series.size() < 2) throw ContractError("zscore needs at least 2 samples");
  const auto [mean, var] = mean_and_variance(series);
  if (!(var > epsilon)) return std::nullopt;
  const double inv_sd = 1.0 / std::sqrt(var);
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (double(series[i]) - mean) * inv_sd;
  return out;
}

inline std::optional<std::vector<double>> zscore(const std::vector<double>& series, double epsilon = 0.0) {
  return zscore(std::span<const double>(series), epsilon);
}

/// Drops signal-free (and masked-out) voxels and z-normalizes the rest.
/// Output rows follow (x, y, z) scan order for any worker count.
inline VoxelSet extract_voxels(const Volume4D& vol, double epsilon, const Mask* mask, unsigned workers = 1) {
  if (epsilon < 0.0) throw ContractError("dead_voxel_epsilon must be >= 0");
  const Dims d = vol.dims();
  if (mask && !(mask->dims == d)) {
    throw ContractError("mask dims do not match volume dims");
  }
  const std::uint32_t t = vol.t_len();
  if (t < 2) throw ContractError("volumes need at least 2 time steps");

  struct Slab {
    std::vector<Coord> coords;
    std::vector<double> series;
  };
  std::vector<Slab> slabs(d.x);
  parallel_for(d.x, workers, [&](std::size_t x, unsigned) {
    Slab& s = slabs[x];
    for (std::uint32_t y = 0; y < d.y; ++y) {
      for (std::uint32_t z = 0; z < d.z; ++z) {
        const Coord c{static_cast<std::uint32_t>(x), y, z};
        if (mask && !mask->includes(vol.voxel_index(c))) continue;
        auto row = zscore(vol.series(c), epsilon);
        if (!row) continue;
        s.coords.push_back(c);
        s.series.insert(s.series.end(), row->begin(), row->end());
      }
    }
  });

  VoxelSet out;
  out.t_len = t;
  for (auto& s : slabs) {
    out.coords.insert(out.coords.end(), s.coords.begin(), s.coords.end());
    out.series.insert(out.series.end(), s.series.begin(), s.series.end());
  }
  if (out.n() == 0) throw EmptyVoxelSetError("every voxel was filtered out as signal-free");
  return out;
}

inline VoxelSet extract_voxels(const Volume4D& vol, const IngestConfig& cfg) {
  std::optional<Mask> mask;
  if (cfg.mask_path) mask = read_mask(*cfg.mask_path);
  return extract_voxels(vol, cfg.dead_voxel_epsilon, mask ? &*mask : nullptr, cfg.workers);
}

}  // namespace voxgraph
