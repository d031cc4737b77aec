#pragma once

/*
 * All-pairs Pearson correlation over a voxel set, thresholded into a sparse
 * undirected edge list.
 *
 * Rows of a VoxelSet are z-scored with population statistics, so the
 * correlation matrix is (1/T) S S^T. The kernel evaluates it one
 * tile_size x tile_size output block at a time over the upper triangle.
 * Every dot product is accumulated sequentially over t = 0..T-1 from 0.0 in
 * double precision, which makes each correlation value bit-identical no
 * matter which tile, micro-block or worker produced it.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "voxgraph/core_types.hpp"
#include "voxgraph/parallel.hpp"

namespace voxgraph {

struct PccConfig {
  double threshold = 0.9;
  std::size_t tile_size = 512;
  unsigned workers = 0;  // 0 = auto

  void check() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("threshold must lie in (0, 1)");
    if (tile_size < 1) throw ContractError("tile_size must be >= 1");
  }
};

/// Standard Pearson correlation, clamped to [-1, 1].
template <typename T>
double pearson(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) throw ContractError("pearson: length mismatch");
  if (x.size() < 2) throw ContractError("pearson: need at least 2 samples");
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += double(x[i]);
    my += double(y[i]);
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = double(x[i]) - mx, dy = double(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelationError("pearson: zero-variance input");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(std::span<const double>(x), std::span<const double>(y));
}

/// n(n-1)/2 in 64-bit arithmetic.
constexpr std::uint64_t pair_count(std::uint64_t n) noexcept { return n < 2 ? 0 : n * (n - 1) / 2; }

/// f32 weight for a correlation already known to exceed tau. Rounds up by one
/// ulp when plain rounding would land on or below tau.
inline float edge_weight(double r, double tau) {
  float w = static_cast<float>(r);
  if (!(double(w) > tau)) w = std::nextafter(w, 2.0f);
  return std::min(w, 1.0f);
}

/// Per-tile edge buffers merged into one sorted list plus a degree histogram.
class EdgeAccumulator {
public:
  explicit EdgeAccumulator(std::size_t n_tiles) : buffers_(n_tiles) {}

  std::vector<Edge>& buffer(std::size_t tile) { return buffers_[tile]; }

  /// Single-threaded merge; `n` is the node count.
  std::vector<Edge> merge(std::size_t n) {
    std::size_t total = 0;
    for (auto& b : buffers_) total += b.size();
    std::vector<Edge> out;
    out.reserve(total);
    for (auto& b : buffers_) {
      out.insert(out.end(), b.begin(), b.end());
      std::vector<Edge>().swap(b);
    }
    std::sort(out.begin(), out.end(), edge_key_less);
    std::vector<std::size_t> degree(n, 0);
    for (const Edge& e : out) {
      ++degree[e.src];
      ++degree[e.dst];
    }
    histogram_.clear();
    for (auto d : degree) ++histogram_[d];
    return out;
  }

  const std::map<std::size_t, std::size_t>& degree_histogram() const noexcept { return histogram_; }

private:
  std::vector<std::vector<Edge>> buffers_;
  std::map<std::size_t, std::size_t> histogram_;
};

namespace detail {

inline constexpr std::size_t kMicro = 4;

/// Padded copies of the z-scored rows: row-major S and column-major S^T with
/// zero rows appended so micro-blocks can read past n.
struct PaddedRows {
  std::size_t n = 0, n_pad = 0, t = 0;
  std::vector<double> rows;  // n_pad x t
  std::vector<double> cols;  // t x n_pad

  explicit PaddedRows(const VoxelSet& vs) : n(vs.n()), n_pad(vs.n() + 2 * kMicro), t(vs.t_len) {
    rows.assign(n_pad * t, 0.0);
    cols.assign(t * n_pad, 0.0);
    std::copy(vs.series.begin(), vs.series.end(), rows.begin());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < t; ++k) cols[k * n_pad + i] = vs.series[i * t + k];
  }
};

/// Correlates rows [i0, i1) against columns [j0, j1), emitting pairs i < j above tau.
inline void correlate_tile(const PaddedRows& p, std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
                           double tau, std::vector<Edge>& out) {
  const std::size_t T = p.t;
  const double inv_t = 1.0 / double(T);
  for (std::size_t i = i0; i < i1; i += kMicro) {
    const double* a[kMicro];
    for (std::size_t k = 0; k < kMicro; ++k) a[k] = p.rows.data() + (i + k) * T;
    // Only columns j > i contribute; skip whole micro-blocks below the diagonal.
    std::size_t jstart = std::max(j0, i + 1);
    for (std::size_t j = jstart; j < j1; j += kMicro) {
      double acc[kMicro][kMicro] = {};
      const double* b = p.cols.data() + j;
      for (std::size_t t = 0; t < T; ++t) {
        const double* bt = b + t * p.n_pad;
        for (std::size_t r = 0; r < kMicro; ++r) {
          const double av = a[r][t];
          for (std::size_t c = 0; c < kMicro; ++c) acc[r][c] += av * bt[c];
        }
      }
      for (std::size_t r = 0; r < kMicro; ++r) {
        const std::size_t ii = i + r;
        if (ii >= i1) break;
        for (std::size_t c = 0; c < kMicro; ++c) {
          const std::size_t jj = j + c;
          if (jj >= j1) break;
          if (jj <= ii) continue;
          const double corr = std::clamp(acc[r][c] * inv_t, -1.0, 1.0);
          if (corr > tau) out.push_back(Edge{NodeId(ii), NodeId(jj), edge_weight(corr, tau)});
        }
      }
    }
  }
}

}  // namespace detail

struct CorrelationResult {
  BrainGraph graph;
  std::map<std::size_t, std::size_t> degree_histogram;
};

/// Thresholded all-pairs correlation graph (unlabelled) with its degree histogram.
inline CorrelationResult correlate_all_with_stats(const VoxelSet& vs, const PccConfig& cfg) {
  cfg.check();
  if (vs.n() < 2) throw ContractError("correlate_all needs at least 2 voxels");
  if (vs.series.size() != vs.n() * vs.t_len) throw ContractError("VoxelSet series size mismatch");

  const detail::PaddedRows padded(vs);
  const std::size_t n = vs.n();
  const std::size_t tile = cfg.tile_size;
  const std::size_t nb = (n + tile - 1) / tile;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  tiles.reserve(nb * (nb + 1) / 2);
  for (std::size_t bi = 0; bi < nb; ++bi)
    for (std::size_t bj = bi; bj < nb; ++bj) tiles.emplace_back(bi, bj);

  EdgeAccumulator acc(tiles.size());
  parallel_for(tiles.size(), cfg.workers, [&](std::size_t task, unsigned) {
    const auto [bi, bj] = tiles[task];
    const std::size_t i0 = bi * tile, i1 = std::min(n, i0 + tile);
    const std::size_t j0 = bj * tile, j1 = std::min(n, j0 + tile);
    detail::correlate_tile(padded, i0, i1, j0, j1, cfg.threshold, acc.buffer(task));
  });

  CorrelationResult res;
  res.graph.t_len = vs.t_len;
  res.graph.node_coords = vs.coords;
  res.graph.node_series.assign(vs.series.begin(), vs.series.end());
  res.graph.edges = acc.merge(n);
  res.degree_histogram = acc.degree_histogram();
  return res;
}

inline BrainGraph correlate_all(const VoxelSet& vs, const PccConfig& cfg) {
  return correlate_all_with_stats(vs, cfg).graph;
}

struct DegreeReport {
  double mean_degree = 0.0;
  std::map<std::size_t, std::size_t> histogram;  // degree -> node count
};

inline DegreeReport degree_report(const BrainGraph& g) {
  DegreeReport rep;
  const std::size_t n = g.n();
  if (n == 0) return rep;
  std::vector<std::size_t> degree(n, 0);
  for (const Edge& e : g.edges) {
    ++degree[e.src];
    ++degree[e.dst];
  }
  for (auto d : degree) ++rep.histogram[d];
  rep.mean_degree = 2.0 * double(g.edges.size()) / double(n);
  return rep;
}

}  // namespace voxgraph
