#pragma once

/*
 * Synthetic volumes with planted community structure.
 *
 * Voxels are scattered at random into communities. A voxel in community c
 * carries  sqrt(rho) * s_c(t) + noise * sqrt(1 - rho) * e(t)  with s_c and e
 * independent white Gaussian series, so thresholded correlation graphs are
 * near-cliques of roughly community size.
 *
 *   topology  class 1 turns a fraction of voxels into singletons (own latent)
 *             and packs the rest into fewer, larger communities
 *   feature   same partition for both classes; class 1 adds a shared
 *             fixed-phase sinusoid to every latent
 *   none      both classes come from the class-0 generator
 */

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxgraph/formats.hpp"
#include "voxgraph/ingest.hpp"
#include "voxgraph/parallel.hpp"
#include "voxgraph/pcc.hpp"

namespace voxgraph::synth {

enum class ClassEffect { Topology, Feature, None };

inline std::string_view to_string(ClassEffect e) {
  switch (e) {
    case ClassEffect::Topology: return "topology";
    case ClassEffect::Feature: return "feature";
    case ClassEffect::None: return "null";
  }
  return "?";
}

inline std::optional<ClassEffect> parse_effect(std::string_view s) {
  if (s == "topology") return ClassEffect::Topology;
  if (s == "feature") return ClassEffect::Feature;
  if (s == "null" || s == "none") return ClassEffect::None;
  return std::nullopt;
}

struct SynthConfig {
  std::size_t n_graphs = 200;
  std::size_t voxels = 1000;
  std::uint32_t t_len = 120;
  std::size_t n_communities = 10;
  double rho_in = 0.95;
  double noise = 1.0;
  double autocorrelation = 0.0;  // AR(1) coefficient of latents and noise
  ClassEffect effect = ClassEffect::Topology;
  std::uint64_t seed = 7;

  // topology effect, class 1
  double isolated_fraction = 0.35;
  std::size_t class1_communities = 4;
  // feature effect, class 1
  double feature_amplitude = 1.0;
  double feature_period = 20.0;

  double tau = 0.9;
  unsigned workers = 1;

  void check() const {
    if (!(rho_in > 0 && rho_in < 1)) throw ContractError("rho_in must lie in (0, 1)");
    if (n_communities < 1 || class1_communities < 1) throw ContractError("community counts must be >= 1");
    if (voxels < 2) throw ContractError("need at least 2 voxels");
    if (t_len < 2) throw ContractError("need at least 2 time steps");
    if (!(autocorrelation >= 0 && autocorrelation < 1)) throw ContractError("autocorrelation must lie in [0, 1)");
    if (!(noise >= 0)) throw ContractError("noise must be >= 0");
    if (!(isolated_fraction >= 0 && isolated_fraction < 1)) throw ContractError("isolated_fraction must lie in [0, 1)");
    if (n_graphs < 1) throw ContractError("n_graphs must be >= 1");
  }
};

/// Near-cubic x >= y >= z with x*y*z == voxels.
inline Dims cubic_dims(std::size_t voxels) {
  Dims best{std::uint32_t(voxels), 1, 1};
  std::size_t best_spread = voxels;
  for (std::size_t z = 1; z * z * z <= voxels; ++z) {
    if (voxels % z) continue;
    const std::size_t rest = voxels / z;
    for (std::size_t y = z; y * y <= rest; ++y) {
      if (rest % y) continue;
      const std::size_t x = rest / y;
      if (x - z < best_spread) {
        best_spread = x - z;
        best = Dims{std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)};
      }
    }
  }
  return best;
}

inline int class_of(std::size_t index) { return int(index % 2); }

inline std::mt19937_64 volume_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

/// Unit-variance stationary AR(1) series with coefficient phi.
inline void fill_ar1(std::span<double> out, double phi, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double innov = std::sqrt(1.0 - phi * phi);
  double prev = g(rng);
  for (auto& v : out) v = prev = phi * prev + innov * g(rng);
}

/// Community id per voxel; ids >= number of shared communities are singletons.
inline std::vector<std::size_t> assign_communities(std::size_t voxels, std::size_t communities, std::size_t singletons,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> perm(voxels);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> id(voxels);
  const std::size_t grouped = voxels - singletons;
  for (std::size_t k = 0; k < voxels; ++k)
    id[perm[k]] = k < grouped ? k * communities / grouped : communities + (k - grouped);
  return id;
}

/// Latent series and community layout for one volume, before noise.
struct Layout {
  std::vector<std::size_t> community;   // per voxel
  std::vector<std::vector<double>> latent;  // per community id
};

inline Layout make_layout(const SynthConfig& cfg, int cls, std::mt19937_64& rng) {
  const bool topo1 = cfg.effect == ClassEffect::Topology && cls == 1;
  const std::size_t singles = topo1 ? std::size_t(std::llround(cfg.isolated_fraction * double(cfg.voxels))) : 0;
  const std::size_t shared = topo1 ? cfg.class1_communities : cfg.n_communities;
  Layout lay;
  lay.community = assign_communities(cfg.voxels, std::min(shared, cfg.voxels - singles), singles, rng);
  const std::size_t n_ids = *std::max_element(lay.community.begin(), lay.community.end()) + 1;
  lay.latent.assign(n_ids, std::vector<double>(cfg.t_len));
  for (auto& s : lay.latent) fill_ar1(s, cfg.autocorrelation, rng);
  if (cfg.effect == ClassEffect::Feature && cls == 1) {
    const double a = cfg.feature_amplitude, norm = std::sqrt(1.0 + a * a);
    for (auto& s : lay.latent)
      for (std::uint32_t t = 0; t < cfg.t_len; ++t)
        s[t] = (s[t] + a * std::numbers::sqrt2 * std::sin(2 * std::numbers::pi * t / cfg.feature_period)) / norm;
  }
  return lay;
}

/// One synthetic volume of class `cls`; deterministic in (cfg.seed, index).
inline Volume4D gen_volume(const SynthConfig& cfg, int cls, std::size_t index) {
  cfg.check();
  if (cls != 0 && cls != 1) throw ContractError("class must be 0 or 1");
  if (cfg.effect == ClassEffect::None) cls = 0;
  std::mt19937_64 rng = volume_rng(cfg.seed, index);
  const Layout lay = make_layout(cfg, cls, rng);
  std::uniform_real_distribution<double> base(50.0, 150.0), scale(1.0, 5.0);
  const double a = std::sqrt(cfg.rho_in), b = cfg.noise * std::sqrt(1.0 - cfg.rho_in);
  std::vector<float> data(cfg.voxels * cfg.t_len);
  std::vector<double> e(cfg.t_len);
  for (std::size_t v = 0; v < cfg.voxels; ++v) {
    const auto& s = lay.latent[lay.community[v]];
    const double off = base(rng), sc = scale(rng);
    fill_ar1(e, cfg.autocorrelation, rng);
    for (std::uint32_t t = 0; t < cfg.t_len; ++t) data[v * cfg.t_len + t] = float(off + sc * (a * s[t] + b * e[t]));
  }
  return Volume4D(cubic_dims(cfg.voxels), cfg.t_len, std::move(data));
}

/// Volume -> voxel set -> thresholded graph, labelled with its class.
inline BrainGraph gen_graph(const SynthConfig& cfg, std::size_t index, unsigned pcc_workers = 1) {
  const int cls = class_of(index);
  const VoxelSet vs = extract_voxels(gen_volume(cfg, cls, index), IngestConfig{});
  PccConfig pc;
  pc.threshold = cfg.tau;
  pc.workers = pcc_workers;
  BrainGraph g = correlate_all(vs, pc);
  g.label = Label(cls);
  return g;
}

/// Writes graph_NNNN.bgr1 files plus manifest.tsv into `out_dir`.
/// Classes alternate by index, so n_graphs = 200 gives 100 per class.
inline GraphDataset gen_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.check();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  GraphDataset ds;
  ds.class_names = {"class0", "class1"};
  ds.entries.resize(cfg.n_graphs);
  const unsigned workers = resolve_workers(cfg.workers);
  parallel_for(cfg.n_graphs, workers, [&](std::size_t i, unsigned) {
    char name[32];
    std::snprintf(name, sizeof name, "graph_%04zu.bgr1", i);
    write_graph(out_dir / name, gen_graph(cfg, i, 1));
    ds.entries[i] = DatasetEntry{out_dir / name, Label(class_of(i))};
  });
  write_manifest(out_dir / "manifest.tsv", ds);
  return ds;
}

/// Graphs without touching disk, for tests and in-process experiments.
inline std::vector<BrainGraph> gen_graphs(const SynthConfig& cfg) {
  cfg.check();
  std::vector<BrainGraph> out(cfg.n_graphs);
  parallel_for(cfg.n_graphs, resolve_workers(cfg.workers), [&](std::size_t i, unsigned) { out[i] = gen_graph(cfg, i, 1); });
  return out;
}

/// Z-scored voxel set of `n` series drawn from the community model, for
/// throughput measurements that skip volume I/O.
inline VoxelSet community_voxels(std::size_t n, std::uint32_t t, std::size_t community_size, double rho,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  VoxelSet vs;
  vs.t_len = t;
  vs.series.reserve(n * t);
  std::vector<double> latent(t), row(t);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (std::size_t i = 0; i < n; ++i) {
    if (i % community_size == 0)
      for (auto& v : latent) v = g(rng);
    for (std::uint32_t k = 0; k < t; ++k) row[k] = a * latent[k] + b * g(rng);
    auto z = zscore(std::span<const double>(row));
    if (!z) throw NumericError(0, "degenerate synthetic series");
    vs.coords.push_back(Coord{std::uint32_t(i), 0, 0});
    vs.series.insert(vs.series.end(), z->begin(), z->end());
  }
  return vs;
}

}  // namespace voxgraph::synth
