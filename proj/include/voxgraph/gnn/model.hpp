#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "voxgraph/error.hpp"
#include "voxgraph/gnn/tensor.hpp"

namespace voxgraph::gnn {

enum class Arch : std::uint8_t { FFN = 0, GCN = 1, GAT = 2, GCRN = 3 };

inline constexpr Arch kAllArchs[] = {Arch::FFN, Arch::GCN, Arch::GAT, Arch::GCRN};

inline std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::FFN: return "ffn";
    case Arch::GCN: return "gcn";
    case Arch::GAT: return "gat";
    case Arch::GCRN: return "gcrn";
  }
  return "?";
}

inline std::optional<Arch> parse_arch(std::string_view s) {
  for (Arch a : kAllArchs)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

/// Architecture plus the size hyperparameters. Hidden layers use ReLU and the
/// graph-level output is a sigmoid; neither is configurable.
struct ModelSpec {
  Arch arch = Arch::GCN;
  std::uint32_t hidden_units = 16;
  std::uint32_t num_mp_layers = 2;  // ignored by FFN (one hidden layer) and GCRN (one recurrent cell)
  std::uint32_t gat_heads = 4;
  bool weighted_messages = false;  // scale GCN/GCRN messages by the edge correlation

  void check() const {
    if (hidden_units < 1) throw ContractError("hidden_units must be >= 1");
    if (num_mp_layers < 1) throw ContractError("num_mp_layers must be >= 1");
    if (gat_heads < 1) throw ContractError("gat_heads must be >= 1");
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <typename R>
struct ParamTensor {
  std::string name;
  Matrix<R> value;
};

/// Trainable tensors in declaration order. Gradients share the same layout.
template <typename R>
struct ModelParams {
  std::vector<ParamTensor<R>> tensors;

  std::size_t size() const noexcept { return tensors.size(); }
  Matrix<R>& operator[](std::size_t i) { return tensors[i].value; }
  const Matrix<R>& operator[](std::size_t i) const { return tensors[i].value; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name == name) return i;
    throw ContractError("no parameter named " + std::string(name));
  }
  Matrix<R>& at(std::string_view name) { return tensors[index_of(name)].value; }
  const Matrix<R>& at(std::string_view name) const { return tensors[index_of(name)].value; }

  std::size_t scalar_count() const noexcept {
    std::size_t k = 0;
    for (const auto& t : tensors) k += t.value.data.size();
    return k;
  }

  ModelParams zeros_like() const {
    ModelParams z;
    for (const auto& t : tensors) z.tensors.push_back({t.name, Matrix<R>(t.value.rows, t.value.cols)});
    return z;
  }

  void set_zero() {
    for (auto& t : tensors) t.value.set_zero();
  }

  /// this += scale * other
  void add_scaled(const ModelParams& other, R scale) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& a = tensors[i].value.data;
      const auto& b = other.tensors[i].value.data;
      for (std::size_t k = 0; k < a.size(); ++k) a[k] += scale * b[k];
    }
  }

  template <typename S>
  ModelParams<S> cast() const {
    ModelParams<S> out;
    for (const auto& t : tensors) {
      Matrix<S> m(t.value.rows, t.value.cols);
      for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = S(t.value.data[k]);
      out.tensors.push_back({t.name, std::move(m)});
    }
    return out;
  }
};

/// Shape declaration for every tensor of `spec` on graphs with `t_len` samples per node.
inline std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_shapes(const ModelSpec& spec,
                                                                                                 std::size_t t_len) {
  spec.check();
  const std::size_t f = 3 + t_len, h = spec.hidden_units, k = spec.gat_heads;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
  auto add = [&](std::string name, std::size_t r, std::size_t c) { out.push_back({std::move(name), {r, c}}); };
  std::size_t pooled = h;
  switch (spec.arch) {
    case Arch::FFN:
      add("ffn.w1", f, h);
      add("ffn.b1", 1, h);
      break;
    case Arch::GCN:
      for (std::size_t l = 0; l < spec.num_mp_layers; ++l) {
        add("gcn" + std::to_string(l) + ".w", l == 0 ? f : h, h);
        add("gcn" + std::to_string(l) + ".b", 1, h);
      }
      break;
    case Arch::GAT:
      for (std::size_t l = 0; l < spec.num_mp_layers; ++l) {
        const std::string p = "gat" + std::to_string(l);
        add(p + ".w", l == 0 ? f : k * h, k * h);
        add(p + ".a_src", k, h);
        add(p + ".a_dst", k, h);
      }
      break;
    case Arch::GCRN:
      for (const char* g : {"z", "r", "h"}) {
        add(std::string("gcrn.w") + g, 1 + h, h);
        add(std::string("gcrn.b") + g, 1, h);
      }
      pooled = h + 3;
      break;
  }
  add("head.w", pooled, 1);
  add("head.b", 1, 1);
  return out;
}

/// Glorot-uniform weights, uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out));
/// biases start at zero. Attention vectors count as (2h -> 1) maps.
template <typename R>
ModelParams<R> init_params(const ModelSpec& spec, std::size_t t_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams<R> p;
  for (auto& [name, shape] : parameter_shapes(spec, t_len)) {
    Matrix<R> m(shape.first, shape.second);
    const bool is_bias = name[name.rfind('.') + 1] == 'b';
    if (!is_bias) {
      double fan_in = double(shape.first), fan_out = double(shape.second);
      if (name.find(".a_") != std::string::npos) {
        fan_in = 2.0 * double(shape.second);
        fan_out = 1.0;
      }
      const double s = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-s, s);
      for (auto& v : m.data) v = R(u(rng));
    }
    p.tensors.push_back({name, std::move(m)});
  }
  return p;
}

}  // namespace voxgraph::gnn
