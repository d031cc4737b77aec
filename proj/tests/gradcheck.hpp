#pragma once

// Central finite-difference oracle for model_backward, shared by the unit and
// acceptance suites.

#include <cmath>
#include <random>
#include <string>

#include "test_util.hpp"
#include "voxgraph/gnn/forward.hpp"

namespace voxgraph::testutil {

struct GradCheckResult {
  bool ok = true;
  double worst_rel = 0.0;
  std::string worst_param;
};

/// Relative error with a floor on the denominator so that gradients of order
/// 1e-3 or smaller are compared absolutely at ~1e-7.
inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

inline GradCheckResult finite_difference_check(const gnn::GraphInput<double>& g, const gnn::ModelSpec& spec,
                                               const gnn::ModelParams<double>& params, int target,
                                               double eps = 1e-3, double tol = 1e-4) {
  const auto analytic = gnn::model_backward(g, spec, params, target);
  gnn::ModelParams<double> p = params;
  GradCheckResult res;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].data.size(); ++k) {
      const double orig = p[i].data[k];
      gnn::ForwardTrace<double> tr;
      p[i].data[k] = orig + eps;
      const double lp = gnn::bce_with_logit(gnn::model_logit(g, spec, p, tr), target);
      p[i].data[k] = orig - eps;
      const double lm = gnn::bce_with_logit(gnn::model_logit(g, spec, p, tr), target);
      p[i].data[k] = orig;
      const double numeric = (lp - lm) / (2 * eps);
      const double rel = grad_rel_error(analytic.grads[i].data[k], numeric);
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_param = p.tensors[i].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  res.ok = res.worst_rel <= tol;
  return res;
}

/// Random small instance whose ReLU / LeakyReLU inputs all stay at least
/// `margin` away from zero, so a perturbation of 1e-3 cannot cross a kink.
struct GradInstance {
  gnn::GraphInput<double> input;
  gnn::ModelParams<double> params;
  int target = 0;
};

inline GradInstance random_grad_instance(const gnn::ModelSpec& spec, std::mt19937_64& rng, double margin = 0.05) {
  std::uniform_int_distribution<int> nodes(2, 8);
  std::uniform_real_distribution<double> p_edge(0.2, 0.7);
  for (;;) {
    const std::size_t n = std::size_t(nodes(rng));
    const std::uint32_t t = spec.arch == gnn::Arch::GCRN ? 4 : 3;
    BrainGraph bg = random_graph(n, t, p_edge(rng), rng);
    bg.label = Label(rng() % 2);
    GradInstance inst{gnn::make_graph_input<double>(bg, spec.weighted_messages),
                      gnn::init_params<double>(spec, t, rng()), int(*bg.label)};
    // Non-zero biases so every code path carries gradient.
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& tensor : inst.params.tensors)
      if (tensor.name[tensor.name.rfind('.') + 1] == 'b')
        for (auto& v : tensor.value.data) v = g(rng);
    gnn::ForwardTrace<double> tr;
    gnn::model_logit(inst.input, spec, inst.params, tr);
    if (gnn::min_kink_margin(spec, tr) >= margin) return inst;
  }
}

}  // namespace voxgraph::testutil
