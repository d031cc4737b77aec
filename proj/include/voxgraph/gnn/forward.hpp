#pragma once

/*
 * Whole-model forward and backward passes.
 *
 * FFN / GCN / GAT consume per-node features [x, y, z, series...]; GCRN steps
 * through the series one scalar per node per time step and appends the mean
 * node coordinate to its pooled state. Every architecture mean-pools node
 * states and applies a logistic head: p = sigmoid(w · h̄ + b).
 */

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "voxgraph/error.hpp"
#include "voxgraph/gnn/graph_input.hpp"
#include "voxgraph/gnn/layers.hpp"
#include "voxgraph/gnn/model.hpp"

namespace voxgraph::gnn {

template <typename R>
struct ForwardTrace {
  std::vector<Matrix<R>> states;  // output of each message-passing layer (FFN: the hidden layer)
  std::vector<GcnCache<R>> gcn;
  std::vector<GatCache<R>> gat;
  Matrix<R> ffn_pre;
  Matrix<R> gcrn_ax;              // Â X_series, n x T
  std::vector<Matrix<R>> gcrn_h;  // h_0 .. h_T
  std::vector<GcrnStepCache<R>> gcrn_steps;
  std::vector<R> pooled;
  R logit = 0;
};

namespace detail {

template <typename R>
void require_finite(const Matrix<R>& m, int layer, const char* what) {
  if (!m.all_finite()) throw NumericError(layer, what);
}

template <typename R>
R apply_head(const ModelParams<R>& params, const std::vector<R>& pooled, int layer) {
  const Matrix<R>& w = params.at("head.w");
  R logit = params.at("head.b").data[0];
  for (std::size_t j = 0; j < pooled.size(); ++j) logit += w.data[j] * pooled[j];
  if (!std::isfinite(logit)) throw NumericError(layer, "head logit");
  return logit;
}

template <typename R>
GcrnWeights<R> gcrn_weights(const ModelParams<R>& p) {
  return {p.at("gcrn.wz"), p.at("gcrn.bz"), p.at("gcrn.wr"), p.at("gcrn.br"), p.at("gcrn.wh"), p.at("gcrn.bh")};
}

template <typename R>
std::span<const R> ax_column(const Matrix<R>& ax_t_major, std::size_t t) {
  return std::span<const R>(ax_t_major.row(t), ax_t_major.cols);
}

}  // namespace detail

/// Logit of the positive class. Fills `trace` for a later backward pass.
template <typename R>
R model_logit(const GraphInput<R>& g, const ModelSpec& spec, const ModelParams<R>& params, ForwardTrace<R>& tr) {
  spec.check();
  const std::size_t n = g.n;
  tr.states.clear();
  switch (spec.arch) {
    case Arch::FFN: {
      tr.ffn_pre = matmul(g.features, params.at("ffn.w1"));
      add_row_bias<R>(tr.ffn_pre, params.at("ffn.b1").data);
      Matrix<R> h = tr.ffn_pre;
      for (auto& v : h.data) v = std::max(v, R(0));
      detail::require_finite(h, 0, "ffn hidden layer");
      tr.states.push_back(std::move(h));
      tr.pooled = column_means(tr.states.back());
      tr.logit = detail::apply_head(params, tr.pooled, 1);
      return tr.logit;
    }
    case Arch::GCN: {
      tr.gcn.assign(spec.num_mp_layers, {});
      for (std::size_t l = 0; l < spec.num_mp_layers; ++l) {
        const Matrix<R>& in = l == 0 ? g.features : tr.states.back();
        const std::string p = "gcn" + std::to_string(l);
        Matrix<R> out = gcn_layer(in, g.prop, params.at(p + ".w"), params.at(p + ".b"), &tr.gcn[l]);
        detail::require_finite(out, int(l), "gcn layer");
        tr.gcn[l].out = Matrix<R>();  // same as states[l]
        tr.states.push_back(std::move(out));
      }
      break;
    }
    case Arch::GAT: {
      tr.gat.assign(spec.num_mp_layers, {});
      for (std::size_t l = 0; l < spec.num_mp_layers; ++l) {
        const Matrix<R>& in = l == 0 ? g.features : tr.states.back();
        const std::string p = "gat" + std::to_string(l);
        const bool last = l + 1 == spec.num_mp_layers;
        Matrix<R> out = gat_layer(in, g.prop, params.at(p + ".w"), params.at(p + ".a_src"), params.at(p + ".a_dst"),
                                  last, &tr.gat[l]);
        detail::require_finite(out, int(l), "gat layer");
        tr.states.push_back(std::move(out));
      }
      break;
    }
    case Arch::GCRN: {
      const std::size_t T = g.t_len, d = spec.hidden_units;
      // Propagated inputs for every step, stored time-major.
      Matrix<R> x(n, T);
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t t = 0; t < T; ++t) x(v, t) = g.features(v, 3 + t);
      const Matrix<R> ax = propagate(g.prop, x);
      tr.gcrn_ax = Matrix<R>(T, n);
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t t = 0; t < T; ++t) tr.gcrn_ax(t, v) = ax(v, t);
      const auto w = detail::gcrn_weights(params);
      tr.gcrn_h.assign(1, Matrix<R>(n, d));
      tr.gcrn_steps.assign(T, {});
      for (std::size_t t = 0; t < T; ++t) {
        Matrix<R> h = gcrn_step<R>(detail::ax_column(tr.gcrn_ax, t), tr.gcrn_h.back(), g.prop, w, &tr.gcrn_steps[t]);
        if (!h.all_finite()) throw NumericError(0, "gcrn state at step " + std::to_string(t));
        tr.gcrn_h.push_back(std::move(h));
      }
      tr.pooled = column_means(tr.gcrn_h.back());
      tr.pooled.insert(tr.pooled.end(), g.mean_coords.begin(), g.mean_coords.end());
      tr.logit = detail::apply_head(params, tr.pooled, 1);
      return tr.logit;
    }
  }
  tr.pooled = column_means(tr.states.back());
  tr.logit = detail::apply_head(params, tr.pooled, int(spec.num_mp_layers));
  return tr.logit;
}

/// Probability of class 1.
template <typename R>
R model_forward(const GraphInput<R>& g, const ModelSpec& spec, const ModelParams<R>& params) {
  ForwardTrace<R> tr;
  return sigmoid(model_logit(g, spec, params, tr));
}

/// Binary cross-entropy on a logit, computed without overflow.
template <typename R>
R bce_with_logit(R logit, int target) {
  return std::max(logit, R(0)) - logit * R(target) + std::log1p(std::exp(-std::abs(logit)));
}

/// Accumulates d(scale * loss)/dparams into `grads` given a filled trace.
template <typename R>
void model_backward_from_trace(const GraphInput<R>& g, const ModelSpec& spec, const ModelParams<R>& params,
                               const ForwardTrace<R>& tr, R d_logit, ModelParams<R>& grads) {
  const std::size_t n = g.n;
  grads.at("head.b").data[0] += d_logit;
  Matrix<R>& d_head = grads.at("head.w");
  for (std::size_t j = 0; j < tr.pooled.size(); ++j) d_head.data[j] += d_logit * tr.pooled[j];

  const Matrix<R>& head_w = params.at("head.w");
  const std::size_t width = spec.arch == Arch::GCRN ? spec.hidden_units : tr.states.back().cols;
  Matrix<R> d_state(n, width);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < width; ++j) d_state(v, j) = d_logit * head_w.data[j] / R(n);

  switch (spec.arch) {
    case Arch::FFN: {
      for (std::size_t q = 0; q < d_state.data.size(); ++q)
        if (!(tr.ffn_pre.data[q] > R(0))) d_state.data[q] = R(0);
      accumulate_column_sums<R>(d_state, grads.at("ffn.b1").data);
      matmul_tn_acc(g.features, d_state, grads.at("ffn.w1"));
      return;
    }
    case Arch::GCN: {
      for (std::size_t l = spec.num_mp_layers; l-- > 0;) {
        const Matrix<R>& in = l == 0 ? g.features : tr.states[l - 1];
        const std::string p = "gcn" + std::to_string(l);
        d_state = gcn_layer_backward(in, g.prop, params.at(p + ".w"), tr.gcn[l], d_state, grads.at(p + ".w"),
                                     grads.at(p + ".b"), l > 0);
      }
      return;
    }
    case Arch::GAT: {
      for (std::size_t l = spec.num_mp_layers; l-- > 0;) {
        const Matrix<R>& in = l == 0 ? g.features : tr.states[l - 1];
        const std::string p = "gat" + std::to_string(l);
        const bool last = l + 1 == spec.num_mp_layers;
        d_state = gat_layer_backward(in, g.prop, params.at(p + ".w"), params.at(p + ".a_src"), params.at(p + ".a_dst"),
                                     last, tr.gat[l], d_state, grads.at(p + ".w"), grads.at(p + ".a_src"),
                                     grads.at(p + ".a_dst"), l > 0);
      }
      return;
    }
    case Arch::GCRN: {
      const auto w = detail::gcrn_weights(params);
      GcrnGrads<R> gg{grads.at("gcrn.wz"), grads.at("gcrn.bz"), grads.at("gcrn.wr"),
                      grads.at("gcrn.br"), grads.at("gcrn.wh"), grads.at("gcrn.bh")};
      for (std::size_t t = g.t_len; t-- > 0;) {
        d_state = gcrn_step_backward<R>(detail::ax_column(tr.gcrn_ax, t), tr.gcrn_h[t], g.prop, w, tr.gcrn_steps[t],
                                        d_state, gg);
      }
      return;
    }
  }
}

template <typename R>
struct LossAndGrad {
  R loss = 0;
  R probability = 0;
  ModelParams<R> grads;
};

/// Binary cross-entropy loss of one labelled graph and its gradient.
template <typename R>
LossAndGrad<R> model_backward(const GraphInput<R>& g, const ModelSpec& spec, const ModelParams<R>& params, int target) {
  ForwardTrace<R> tr;
  const R logit = model_logit(g, spec, params, tr);
  LossAndGrad<R> out;
  out.probability = sigmoid(logit);
  out.loss = bce_with_logit(logit, target);
  out.grads = params.zeros_like();
  model_backward_from_trace(g, spec, params, tr, out.probability - R(target), out.grads);
  for (std::size_t i = 0; i < out.grads.size(); ++i) detail::require_finite(out.grads[i], int(i), "gradient");
  return out;
}

/// Smallest |input| over every ReLU / LeakyReLU in the trace; 0 means an input
/// sits exactly on a kink where the derivative is one-sided.
template <typename R>
R min_kink_margin(const ModelSpec& spec, const ForwardTrace<R>& tr) {
  R m = std::numeric_limits<R>::infinity();
  auto scan = [&](const std::vector<R>& xs) {
    for (R x : xs) m = std::min(m, std::abs(x));
  };
  switch (spec.arch) {
    case Arch::FFN: scan(tr.ffn_pre.data); break;
    case Arch::GCN:
      for (const auto& c : tr.gcn) scan(c.pre.data);
      break;
    case Arch::GAT:
      for (const auto& c : tr.gat) {
        scan(c.score);
        scan(c.concat.data);
      }
      break;
    case Arch::GCRN: break;
  }
  return m;
}

}  // namespace voxgraph::gnn
