#pragma once

#include <cmath>
#include <vector>

#include "voxgraph/core_types.hpp"
#include "voxgraph/gnn/tensor.hpp"

namespace voxgraph::gnn {

/// Neighbourhoods N(v) ∪ {v} in CSR form with the symmetric GCN normalisation
/// coef(v,u) = m(v,u) / sqrt(d̂_v d̂_u). With plain messages m = 1 and
/// d̂ = degree + 1; with weight-scaled messages m is the edge weight (1 on the
/// self loop) and d̂ = 1 + sum of incident weights.
template <typename R>
struct Propagation {
  std::vector<std::size_t> offsets;
  std::vector<NodeId> ids;
  std::vector<R> coef;

  std::size_t n() const noexcept { return offsets.size() - 1; }
};

template <typename R>
Propagation<R> make_propagation(const NeighborIndex& nbr, bool weighted) {
  const std::size_t n = nbr.n();
  Propagation<R> p;
  p.offsets.assign(n + 1, 0);
  std::vector<double> dhat(n, 1.0);
  for (NodeId v = 0; v < n; ++v) {
    p.offsets[v + 1] = p.offsets[v] + nbr.degree(v) + 1;
    if (weighted) {
      for (float w : nbr.neighbor_weights(v)) dhat[v] += double(w);
    } else {
      dhat[v] += double(nbr.degree(v));
    }
  }
  p.ids.resize(p.offsets[n]);
  p.coef.resize(p.offsets[n]);
  for (NodeId v = 0; v < n; ++v) {
    std::size_t k = p.offsets[v];
    auto ns = nbr.neighbors(v);
    auto ws = nbr.neighbor_weights(v);
    bool self_done = false;
    auto emit = [&](NodeId u, double m) {
      p.ids[k] = u;
      p.coef[k] = R(m / std::sqrt(dhat[v] * dhat[u]));
      ++k;
    };
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (!self_done && ns[i] > v) {
        emit(v, 1.0);
        self_done = true;
      }
      emit(ns[i], weighted ? double(ws[i]) : 1.0);
    }
    if (!self_done) emit(v, 1.0);
  }
  return p;
}

/// Y = Â X
template <typename R>
Matrix<R> propagate(const Propagation<R>& p, const Matrix<R>& x) {
  Matrix<R> y(x.rows, x.cols);
  for (std::size_t v = 0; v < p.n(); ++v) {
    R* yv = y.row(v);
    for (std::size_t k = p.offsets[v]; k < p.offsets[v + 1]; ++k) {
      const R c = p.coef[k];
      const R* xu = x.row(p.ids[k]);
      for (std::size_t j = 0; j < x.cols; ++j) yv[j] += c * xu[j];
    }
  }
  return y;
}

/// Model-ready view of one BrainGraph: features [x, y, z, series...] per node
/// and the neighbourhood structure.
template <typename R>
struct GraphInput {
  std::size_t n = 0;
  std::size_t t_len = 0;
  Matrix<R> features;          // n x (3 + t_len); column 3 + t is the sample at step t
  std::vector<R> mean_coords;  // 3
  Propagation<R> prop;
  bool weighted_messages = false;
  Label label = 0;
};

template <typename R>
GraphInput<R> make_graph_input(const BrainGraph& g, bool weighted_messages = false) {
  GraphInput<R> in;
  in.n = g.n();
  in.t_len = g.t_len;
  if (in.n == 0) throw ContractError("graph has no nodes");
  in.features = Matrix<R>(in.n, 3 + in.t_len);
  in.mean_coords.assign(3, R(0));
  double sum[3] = {0, 0, 0};
  for (NodeId v = 0; v < in.n; ++v) {
    const Coord c = g.node_coords[v];
    R* f = in.features.row(v);
    f[0] = R(c.x);
    f[1] = R(c.y);
    f[2] = R(c.z);
    sum[0] += c.x;
    sum[1] += c.y;
    sum[2] += c.z;
    auto s = g.series(v);
    for (std::size_t t = 0; t < in.t_len; ++t) f[3 + t] = R(s[t]);
  }
  for (int k = 0; k < 3; ++k) in.mean_coords[k] = R(sum[k] / double(in.n));
  in.prop = make_propagation<R>(neighbor_list(g), weighted_messages);
  in.weighted_messages = weighted_messages;
  in.label = g.label.value_or(0);
  return in;
}

}  // namespace voxgraph::gnn
