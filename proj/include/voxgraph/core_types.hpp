#pragma once

/*
 * Shared data model: raw volumes, filtered voxel sets, correlation graphs
 * and labelled datasets of graphs on disk.
 */

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxgraph/error.hpp"

namespace voxgraph {

using NodeId = std::uint32_t;
using Label = std::uint8_t;

/// Integer grid coordinates of a voxel.
struct Coord {
  std::uint32_t x = 0, y = 0, z = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

struct Dims {
  std::uint32_t x = 0, y = 0, z = 0;
  std::size_t voxels() const noexcept { return std::size_t(x) * y * z; }
  bool contains(const Coord& c) const noexcept { return c.x < x && c.y < y && c.z < z; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Raw voxel time-series grid. Layout is x-major, then y, then z, with time
/// fastest within a voxel.
class Volume4D {
public:
  Volume4D(Dims dims, std::uint32_t t_len, std::vector<float> data)
      : dims_(dims), t_len_(t_len), data_(std::move(data)) {
    if (dims.x == 0 || dims.y == 0 || dims.z == 0 || t_len == 0) {
      throw ContractError("Volume4D: every dimension must be >= 1");
    }
    if (data_.size() != dims.voxels() * t_len) {
      throw ContractError("Volume4D: data length " + std::to_string(data_.size()) +
                          " != X*Y*Z*T = " + std::to_string(dims.voxels() * t_len));
    }
  }

  Dims dims() const noexcept { return dims_; }
  std::uint32_t t_len() const noexcept { return t_len_; }
  std::span<const float> data() const noexcept { return data_; }

  std::size_t voxel_index(const Coord& c) const noexcept {
    return (std::size_t(c.x) * dims_.y + c.y) * dims_.z + c.z;
  }

  std::span<const float> series(const Coord& c) const noexcept {
    return std::span<const float>(data_).subspan(voxel_index(c) * t_len_, t_len_);
  }

  friend bool operator==(const Volume4D&, const Volume4D&) = default;

private:
  Dims dims_;
  std::uint32_t t_len_;
  std::vector<float> data_;
};

/// Retained voxels after dead-voxel filtering, each row z-normalized.
struct VoxelSet {
  std::uint32_t t_len = 0;
  std::vector<Coord> coords;
  std::vector<double> series;  // coords.size() x t_len, row-major

  std::size_t n() const noexcept { return coords.size(); }

  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(series).subspan(i * t_len, t_len);
  }
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  float weight = 0.0f;
  friend bool operator==(const Edge&, const Edge&) = default;
};

inline bool edge_key_less(const Edge& a, const Edge& b) noexcept {
  return a.src != b.src ? a.src < b.src : a.dst < b.dst;
}

/// Voxel-wise correlation graph: nodes carry coordinates and their time series,
/// edges are stored once with src < dst, sorted by (src, dst).
struct BrainGraph {
  std::uint32_t t_len = 0;
  std::vector<Coord> node_coords;
  std::vector<float> node_series;  // n x t_len
  std::vector<Edge> edges;
  std::optional<Label> label;

  std::size_t n() const noexcept { return node_coords.size(); }

  std::span<const float> series(NodeId v) const noexcept {
    return std::span<const float>(node_series).subspan(std::size_t(v) * t_len, t_len);
  }

  friend bool operator==(const BrainGraph&, const BrainGraph&) = default;
};

/// Throws ContractError if the graph violates its structural invariants.
/// A positive `threshold` additionally checks every weight exceeds it.
inline void validate(const BrainGraph& g, std::optional<double> threshold = std::nullopt) {
  const std::size_t n = g.n();
  if (g.node_series.size() != n * g.t_len) throw ContractError("BrainGraph: series size mismatch");
  if (g.label && *g.label > 1) throw ContractError("BrainGraph: label must be 0 or 1");
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const Edge& e = g.edges[i];
    if (e.src >= n || e.dst >= n) throw ContractError("BrainGraph: edge endpoint out of range");
    if (e.src >= e.dst) throw ContractError("BrainGraph: edge not in canonical src < dst form");
    if (!(e.weight > -1.0f && e.weight <= 1.0f)) throw ContractError("BrainGraph: weight outside (-1, 1]");
    if (threshold && !(double(e.weight) > *threshold)) {
      throw ContractError("BrainGraph: weight does not exceed threshold");
    }
    if (i > 0 && !edge_key_less(g.edges[i - 1], e)) {
      throw ContractError("BrainGraph: edges unsorted or duplicated");
    }
  }
}

/// [x, y, z, series...] for node v.
inline std::vector<double> node_feature_vector(const BrainGraph& g, NodeId v) {
  if (v >= g.n()) {
    throw ContractError("node id " + std::to_string(v) + " out of range (n = " + std::to_string(g.n()) + ")");
  }
  std::vector<double> out;
  out.reserve(3 + g.t_len);
  const Coord c = g.node_coords[v];
  out.push_back(c.x);
  out.push_back(c.y);
  out.push_back(c.z);
  for (float s : g.series(v)) out.push_back(s);
  return out;
}

/// Symmetric CSR view of the undirected edge list.
struct NeighborIndex {
  std::vector<std::size_t> offsets;  // n + 1
  std::vector<NodeId> ids;
  std::vector<float> weights;

  std::size_t n() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t degree(NodeId v) const noexcept { return offsets[v + 1] - offsets[v]; }
  std::span<const NodeId> neighbors(NodeId v) const noexcept {
    return std::span<const NodeId>(ids).subspan(offsets[v], degree(v));
  }
  std::span<const float> neighbor_weights(NodeId v) const noexcept {
    return std::span<const float>(weights).subspan(offsets[v], degree(v));
  }
};

inline NeighborIndex neighbor_list(std::size_t n, std::span<const Edge> edges) {
  NeighborIndex idx;
  idx.offsets.assign(n + 1, 0);
  for (const Edge& e : edges) {
    ++idx.offsets[e.src + 1];
    ++idx.offsets[e.dst + 1];
  }
  for (std::size_t v = 0; v < n; ++v) idx.offsets[v + 1] += idx.offsets[v];
  idx.ids.resize(2 * edges.size());
  idx.weights.resize(2 * edges.size());
  std::vector<std::size_t> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  // Input is sorted by (src, dst): node v first receives its smaller
  // neighbours (as dst, ascending src) and then its larger ones (as src).
  for (const Edge& e : edges) {
    idx.ids[cursor[e.src]] = e.dst;
    idx.weights[cursor[e.src]++] = e.weight;
    idx.ids[cursor[e.dst]] = e.src;
    idx.weights[cursor[e.dst]++] = e.weight;
  }
  return idx;
}

inline NeighborIndex neighbor_list(const BrainGraph& g) { return neighbor_list(g.n(), g.edges); }

/// One labelled graph file referenced from a manifest.
struct DatasetEntry {
  std::filesystem::path path;
  Label label = 0;
};

struct GraphDataset {
  std::vector<DatasetEntry> entries;
  std::array<std::string, 2> class_names{"0", "1"};

  std::size_t size() const noexcept { return entries.size(); }

  std::vector<Label> labels() const {
    std::vector<Label> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.label);
    return out;
  }
};

inline void validate(const GraphDataset& ds) {
  bool seen[2] = {false, false};
  for (const auto& e : ds.entries) {
    if (e.label > 1) throw ContractError("dataset label must be 0 or 1: " + e.path.string());
    seen[e.label] = true;
  }
  if (!seen[0] || !seen[1]) throw ContractError("dataset must contain both classes");
}

}  // namespace voxgraph
