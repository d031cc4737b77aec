#pragma once

/*
 * Message-passing layers with hand-derived backward passes.
 *
 *   GCN   h'_v = ReLU( sum_{u in N(v) ∪ {v}} coef(v,u) W^T h_u + b )
 *   GAT   per head e_vu = LeakyReLU(a_src·Wh_v + a_dst·Wh_u), α = softmax_u(e),
 *         h'_v = sum_u α_vu W h_u; heads concatenated + ReLU (hidden) or averaged (final)
 *   GCRN  GRU gates whose input transforms are the GCN propagation without ReLU
 *
 * Forward functions fill a cache that the matching backward consumes. Backward
 * functions accumulate into parameter gradients and return dL/dInput.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "voxgraph/gnn/graph_input.hpp"
#include "voxgraph/gnn/tensor.hpp"

namespace voxgraph::gnn {

inline constexpr double kLeakySlope = 0.2;

// ---------------------------------------------------------------- GCN

template <typename R>
struct GcnCache {
  Matrix<R> pre;  // Â H W + b
  Matrix<R> out;  // ReLU(pre)
};

template <typename R>
Matrix<R> gcn_layer(const Matrix<R>& h, const Propagation<R>& prop, const Matrix<R>& w, const Matrix<R>& b,
                    GcnCache<R>* cache = nullptr) {
  Matrix<R> pre = propagate(prop, matmul(h, w));
  add_row_bias<R>(pre, b.data);
  Matrix<R> out = pre;
  for (auto& v : out.data) v = std::max(v, R(0));
  if (cache) {
    cache->pre = std::move(pre);
    cache->out = out;
  }
  return out;
}

/// Returns dL/dH when `want_input_grad`, otherwise an empty matrix.
template <typename R>
Matrix<R> gcn_layer_backward(const Matrix<R>& h, const Propagation<R>& prop, const Matrix<R>& w,
                             const GcnCache<R>& cache, const Matrix<R>& d_out, Matrix<R>& d_w, Matrix<R>& d_b,
                             bool want_input_grad) {
  Matrix<R> d_pre = d_out;
  for (std::size_t k = 0; k < d_pre.data.size(); ++k)
    if (!(cache.pre.data[k] > R(0))) d_pre.data[k] = R(0);
  accumulate_column_sums<R>(d_pre, d_b.data);
  Matrix<R> d_z = propagate(prop, d_pre);  // Â is symmetric
  matmul_tn_acc(h, d_z, d_w);
  if (!want_input_grad) return {};
  return matmul_nt(d_z, w);
}

// ---------------------------------------------------------------- GAT

template <typename R>
struct GatCache {
  Matrix<R> z;               // H W, n x (heads * units)
  std::vector<R> score;      // heads x nnz, raw a_src·z_v + a_dst·z_u before LeakyReLU
  std::vector<R> alpha;      // heads x nnz, attention weights in CSR order of the propagation
  Matrix<R> concat;          // heads concatenated, before ReLU (hidden layers only)
};

template <typename R>
R leaky_relu(R x) {
  return x > R(0) ? x : R(kLeakySlope) * x;
}

/// Graph attention layer. `final_layer` averages heads (output n x units),
/// otherwise heads are concatenated and passed through ReLU (n x heads*units).
template <typename R>
Matrix<R> gat_layer(const Matrix<R>& h, const Propagation<R>& prop, const Matrix<R>& w, const Matrix<R>& a_src,
                    const Matrix<R>& a_dst, bool final_layer, GatCache<R>* cache = nullptr) {
  const std::size_t n = h.rows, heads = a_src.rows, units = a_src.cols;
  if (w.cols != heads * units || a_dst.rows != heads || a_dst.cols != units) throw ContractError("gat_layer: shape mismatch");
  const std::size_t nnz = prop.ids.size();
  GatCache<R> local;
  GatCache<R>& c = cache ? *cache : local;
  c.z = matmul(h, w);
  c.score.assign(heads * nnz, R(0));
  c.alpha.assign(heads * nnz, R(0));
  Matrix<R> concat(n, heads * units);
  std::vector<R> s_src(n), s_dst(n);
  for (std::size_t k = 0; k < heads; ++k) {
    const R* as = a_src.row(k);
    const R* ad = a_dst.row(k);
    for (std::size_t v = 0; v < n; ++v) {
      const R* zv = c.z.row(v) + k * units;
      R s1 = 0, s2 = 0;
      for (std::size_t j = 0; j < units; ++j) {
        s1 += as[j] * zv[j];
        s2 += ad[j] * zv[j];
      }
      s_src[v] = s1;
      s_dst[v] = s2;
    }
    R* score = c.score.data() + k * nnz;
    R* alpha = c.alpha.data() + k * nnz;
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t b = prop.offsets[v], e = prop.offsets[v + 1];
      R mx = -std::numeric_limits<R>::infinity();
      for (std::size_t i = b; i < e; ++i) {
        score[i] = s_src[v] + s_dst[prop.ids[i]];
        mx = std::max(mx, leaky_relu(score[i]));
      }
      R denom = 0;
      for (std::size_t i = b; i < e; ++i) {
        alpha[i] = std::exp(leaky_relu(score[i]) - mx);
        denom += alpha[i];
      }
      R* out = concat.row(v) + k * units;
      for (std::size_t i = b; i < e; ++i) {
        alpha[i] /= denom;
        const R* zu = c.z.row(prop.ids[i]) + k * units;
        for (std::size_t j = 0; j < units; ++j) out[j] += alpha[i] * zu[j];
      }
    }
  }
  if (final_layer) {
    Matrix<R> out(n, units);
    const R inv = R(1) / R(heads);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < heads; ++k)
        for (std::size_t j = 0; j < units; ++j) out(v, j) += inv * concat(v, k * units + j);
    c.concat = Matrix<R>();
    return out;
  }
  Matrix<R> out = concat;
  for (auto& x : out.data) x = std::max(x, R(0));
  c.concat = std::move(concat);
  return out;
}

template <typename R>
Matrix<R> gat_layer_backward(const Matrix<R>& h, const Propagation<R>& prop, const Matrix<R>& w, const Matrix<R>& a_src,
                             const Matrix<R>& a_dst, bool final_layer, const GatCache<R>& c, const Matrix<R>& d_out,
                             Matrix<R>& d_w, Matrix<R>& d_asrc, Matrix<R>& d_adst, bool want_input_grad) {
  const std::size_t n = h.rows, heads = a_src.rows, units = a_src.cols;
  const std::size_t nnz = prop.ids.size();
  Matrix<R> d_concat(n, heads * units);
  if (final_layer) {
    const R inv = R(1) / R(heads);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < heads; ++k)
        for (std::size_t j = 0; j < units; ++j) d_concat(v, k * units + j) = inv * d_out(v, j);
  } else {
    for (std::size_t q = 0; q < d_concat.data.size(); ++q)
      d_concat.data[q] = c.concat.data[q] > R(0) ? d_out.data[q] : R(0);
  }

  Matrix<R> d_z(n, heads * units);
  std::vector<R> d_src(n), d_dst(n), d_alpha;
  for (std::size_t k = 0; k < heads; ++k) {
    std::fill(d_src.begin(), d_src.end(), R(0));
    std::fill(d_dst.begin(), d_dst.end(), R(0));
    const R* score = c.score.data() + k * nnz;
    const R* alpha = c.alpha.data() + k * nnz;
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t b = prop.offsets[v], e = prop.offsets[v + 1];
      const R* g = d_concat.row(v) + k * units;
      d_alpha.assign(e - b, R(0));
      R weighted = 0;
      for (std::size_t i = b; i < e; ++i) {
        const NodeId u = prop.ids[i];
        const R* zu = c.z.row(u) + k * units;
        R* dzu = d_z.row(u) + k * units;
        R da = 0;
        for (std::size_t j = 0; j < units; ++j) {
          da += g[j] * zu[j];
          dzu[j] += alpha[i] * g[j];
        }
        d_alpha[i - b] = da;
        weighted += alpha[i] * da;
      }
      for (std::size_t i = b; i < e; ++i) {
        const R d_lrelu = alpha[i] * (d_alpha[i - b] - weighted);
        const R d_score = score[i] > R(0) ? d_lrelu : R(kLeakySlope) * d_lrelu;
        d_src[v] += d_score;
        d_dst[prop.ids[i]] += d_score;
      }
    }
    const R* as = a_src.row(k);
    const R* ad = a_dst.row(k);
    R* das = d_asrc.row(k);
    R* dad = d_adst.row(k);
    for (std::size_t v = 0; v < n; ++v) {
      const R* zv = c.z.row(v) + k * units;
      R* dzv = d_z.row(v) + k * units;
      for (std::size_t j = 0; j < units; ++j) {
        dzv[j] += d_src[v] * as[j] + d_dst[v] * ad[j];
        das[j] += d_src[v] * zv[j];
        dad[j] += d_dst[v] * zv[j];
      }
    }
  }
  matmul_tn_acc(h, d_z, d_w);
  if (!want_input_grad) return {};
  return matmul_nt(d_z, w);
}

// ---------------------------------------------------------------- GCRN

/// Gate parameters: each w has 1 + units rows (row 0 multiplies the scalar
/// input, the rest the hidden state) and `units` columns.
template <typename R>
struct GcrnWeights {
  const Matrix<R>& wz;
  const Matrix<R>& bz;
  const Matrix<R>& wr;
  const Matrix<R>& br;
  const Matrix<R>& wh;
  const Matrix<R>& bh;
};

template <typename R>
struct GcrnGrads {
  Matrix<R>& wz;
  Matrix<R>& bz;
  Matrix<R>& wr;
  Matrix<R>& br;
  Matrix<R>& wh;
  Matrix<R>& bh;
};

template <typename R>
struct GcrnStepCache {
  Matrix<R> p;   // Â H_prev
  Matrix<R> q;   // Â (r ⊙ H_prev)
  Matrix<R> z, r, h_tilde;
};

namespace detail {

/// out = ax ⊗ w.row(0) + m · w.rows(1..) + b
template <typename R>
Matrix<R> gate_affine(std::span<const R> ax, const Matrix<R>& m, const Matrix<R>& w, const Matrix<R>& b) {
  const std::size_t n = m.rows, d = w.cols;
  Matrix<R> out(n, d);
  const R* w0 = w.row(0);
  for (std::size_t v = 0; v < n; ++v) {
    R* o = out.row(v);
    const R* mv = m.row(v);
    for (std::size_t j = 0; j < d; ++j) o[j] = ax[v] * w0[j] + b.data[j];
    for (std::size_t i = 0; i < m.cols; ++i) {
      const R mi = mv[i];
      const R* wi = w.row(1 + i);
      for (std::size_t j = 0; j < d; ++j) o[j] += mi * wi[j];
    }
  }
  return out;
}

/// Accumulates gate_affine gradients; returns dL/dm.
template <typename R>
Matrix<R> gate_affine_backward(std::span<const R> ax, const Matrix<R>& m, const Matrix<R>& w, const Matrix<R>& d_out,
                               Matrix<R>& d_w, Matrix<R>& d_b) {
  const std::size_t n = m.rows, d = w.cols;
  Matrix<R> d_m(n, m.cols);
  R* dw0 = d_w.row(0);
  for (std::size_t v = 0; v < n; ++v) {
    const R* g = d_out.row(v);
    const R* mv = m.row(v);
    R* dm = d_m.row(v);
    for (std::size_t j = 0; j < d; ++j) {
      dw0[j] += ax[v] * g[j];
      d_b.data[j] += g[j];
    }
    for (std::size_t i = 0; i < m.cols; ++i) {
      const R* wi = w.row(1 + i);
      R* dwi = d_w.row(1 + i);
      const R mi = mv[i];
      R acc = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dwi[j] += mi * g[j];
        acc += g[j] * wi[j];
      }
      dm[i] = acc;
    }
  }
  return d_m;
}

}  // namespace detail

/// One recurrent step given the already-propagated scalar input ax = Â x_t.
template <typename R>
Matrix<R> gcrn_step(std::span<const R> ax, const Matrix<R>& h_prev, const Propagation<R>& prop,
                    const GcrnWeights<R>& p, GcrnStepCache<R>* cache = nullptr) {
  const std::size_t n = h_prev.rows, d = h_prev.cols;
  GcrnStepCache<R> local;
  GcrnStepCache<R>& c = cache ? *cache : local;
  c.p = propagate(prop, h_prev);
  c.z = detail::gate_affine(ax, c.p, p.wz, p.bz);
  c.r = detail::gate_affine(ax, c.p, p.wr, p.br);
  for (auto& v : c.z.data) v = sigmoid(v);
  for (auto& v : c.r.data) v = sigmoid(v);
  Matrix<R> rh(n, d);
  for (std::size_t q = 0; q < rh.data.size(); ++q) rh.data[q] = c.r.data[q] * h_prev.data[q];
  c.q = propagate(prop, rh);
  c.h_tilde = detail::gate_affine(ax, c.q, p.wh, p.bh);
  for (auto& v : c.h_tilde.data) v = std::tanh(v);
  Matrix<R> h(n, d);
  for (std::size_t q = 0; q < h.data.size(); ++q)
    h.data[q] = c.z.data[q] * h_prev.data[q] + (R(1) - c.z.data[q]) * c.h_tilde.data[q];
  return h;
}

/// GConvGRU cell on raw per-node inputs x_t (length n).
template <typename R>
Matrix<R> gcrn_cell(std::span<const R> x_t, const Matrix<R>& h_prev, const Propagation<R>& prop,
                    const GcrnWeights<R>& p) {
  Matrix<R> x(x_t.size(), 1);
  std::copy(x_t.begin(), x_t.end(), x.data.begin());
  const Matrix<R> ax = propagate(prop, x);
  return gcrn_step<R>(ax.data, h_prev, prop, p);
}

/// Backward through one step: accumulates gate gradients, returns dL/dH_prev.
template <typename R>
Matrix<R> gcrn_step_backward(std::span<const R> ax, const Matrix<R>& h_prev, const Propagation<R>& prop,
                             const GcrnWeights<R>& p, const GcrnStepCache<R>& c, const Matrix<R>& d_h,
                             GcrnGrads<R>& g) {
  const std::size_t n = h_prev.rows, d = h_prev.cols;
  Matrix<R> d_prev(n, d), d_zpre(n, d), d_hpre(n, d);
  for (std::size_t q = 0; q < d_h.data.size(); ++q) {
    const R z = c.z.data[q], ht = c.h_tilde.data[q], dh = d_h.data[q];
    d_prev.data[q] = dh * z;
    d_zpre.data[q] = dh * (h_prev.data[q] - ht) * z * (R(1) - z);
    d_hpre.data[q] = dh * (R(1) - z) * (R(1) - ht * ht);
  }
  const Matrix<R> d_q = detail::gate_affine_backward(ax, c.q, p.wh, d_hpre, g.wh, g.bh);
  const Matrix<R> d_rh = propagate(prop, d_q);
  Matrix<R> d_rpre(n, d);
  for (std::size_t q = 0; q < d_rh.data.size(); ++q) {
    const R r = c.r.data[q];
    d_prev.data[q] += d_rh.data[q] * r;
    d_rpre.data[q] = d_rh.data[q] * h_prev.data[q] * r * (R(1) - r);
  }
  Matrix<R> d_p = detail::gate_affine_backward(ax, c.p, p.wz, d_zpre, g.wz, g.bz);
  const Matrix<R> d_p_r = detail::gate_affine_backward(ax, c.p, p.wr, d_rpre, g.wr, g.br);
  for (std::size_t q = 0; q < d_p.data.size(); ++q) d_p.data[q] += d_p_r.data[q];
  const Matrix<R> d_from_p = propagate(prop, d_p);
  for (std::size_t q = 0; q < d_prev.data.size(); ++q) d_prev.data[q] += d_from_p.data[q];
  return d_prev;
}

}  // namespace voxgraph::gnn
