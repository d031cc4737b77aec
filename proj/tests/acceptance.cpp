// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   voxgraph_acceptance                 run all criteria
//   voxgraph_acceptance --criterion N   run one

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "gradcheck.hpp"
#include "test_util.hpp"
#include "voxgraph/bench.hpp"
#include "voxgraph/formats.hpp"
#include "voxgraph/gnn/checkpoint.hpp"
#include "voxgraph/synthgen.hpp"
#include "voxgraph/training.hpp"

using namespace voxgraph;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome pcc_oracle() {
  Stopwatch sw;
  std::size_t edges = 0, mismatched_sets = 0;
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const VoxelSet vs = testutil::random_walk_voxels(500, 120, 1000 + s, 2 + s % 7, 0.15 + 0.02 * double(s % 5));
    PccConfig pc;
    pc.threshold = 0.9;
    pc.workers = 0;
    const BrainGraph g = correlate_all(vs, pc);
    const auto oracle = testutil::oracle_edges(vs, 0.9);
    edges += oracle.size();
    bool same = g.edges.size() == oracle.size();
    for (std::size_t k = 0; same && k < oracle.size(); ++k) {
      const auto& [a, b, r] = oracle[k];
      same = g.edges[k].src == a && g.edges[k].dst == b;
      worst = std::max(worst, std::abs(double(g.edges[k].weight) - r));
    }
    mismatched_sets += !same;
  }
  const double secs = sw.seconds();
  return {mismatched_sets == 0 && worst <= 1e-5 && secs < 60,
          fmt("%zu oracle edges over 20 sets, %zu edge-set mismatches, max |w - r| = %.2e (tol 1e-5), %.1f s (limit 60)",
              edges, mismatched_sets, worst, secs)};
}

// ---------------------------------------------------------------- 2

Outcome parallel_determinism() {
  Stopwatch sw;
  const VoxelSet vs = testutil::random_walk_voxels(3000, 120, 77, 10, 0.2);
  const auto dir = testutil::temp_dir("acceptance_det");
  std::optional<io::Bytes> first;
  std::size_t differing = 0, edges = 0;
  for (unsigned w : {1u, 2u, 8u})
    for (std::size_t tile : {64u, 512u}) {
      PccConfig pc;
      pc.workers = w;
      pc.tile_size = tile;
      const BrainGraph g = correlate_all(vs, pc);
      edges = g.edges.size();
      const auto path = dir / fmt("w%u_t%zu.bgr1", w, tile);
      write_graph(path, g);
      const auto bytes = io::read_file(path);
      if (!first)
        first = bytes;
      else
        differing += bytes != *first;
    }
  const double secs = sw.seconds();
  return {differing == 0 && secs < 120,
          fmt("6 configurations, %zu edges, %zu files differ from workers=1/tile=64, %.1f s (limit 120)", edges,
              differing, secs)};
}

// ---------------------------------------------------------------- 3

Outcome pair_count_check() {
  const std::uint64_t got = pair_count(60000);
  return {got == 1799970000ull, fmt("pair_count(60000) = %llu, expected 1799970000", (unsigned long long)got)};
}

// ---------------------------------------------------------------- 4

Outcome gradient_checks() {
  Stopwatch sw;
  std::mt19937_64 rng(2024);
  std::ostringstream os;
  bool ok = true;
  for (gnn::Arch a : gnn::kAllArchs) {
    const gnn::ModelSpec spec{a, 4, 2, 2};
    int passed = 0;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
      const auto inst = testutil::random_grad_instance(spec, rng);
      const auto res = testutil::finite_difference_check(inst.input, spec, inst.params, inst.target);
      passed += res.ok;
      worst = std::max(worst, res.worst_rel);
    }
    ok = ok && passed == 20;
    os << gnn::to_string(a) << " " << passed << "/20 (worst rel " << fmt("%.1e", worst) << ") ";
  }
  const double secs = sw.seconds();
  os << fmt("tol 1e-4, %.1f s (limit 300)", secs);
  return {ok && secs < 300, os.str()};
}

// ---------------------------------------------------------------- 5

Outcome permutation_invariance() {
  std::mt19937_64 rng(55);
  std::ostringstream os;
  bool ok = true;
  for (gnn::Arch a : gnn::kAllArchs) {
    const gnn::ModelSpec spec{a, 8, 2, 2};
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
      const BrainGraph g = testutil::random_graph(3 + rng() % 30, 6, 0.3, rng);
      std::vector<NodeId> perm(g.n());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto params = gnn::init_params<double>(spec, 6, rng());
      const double p0 = gnn::model_forward(gnn::make_graph_input<double>(g), spec, params);
      const double p1 =
          gnn::model_forward(gnn::make_graph_input<double>(testutil::permute_graph(g, perm)), spec, params);
      worst = std::max(worst, std::abs(p0 - p1));
    }
    ok = ok && worst <= 1e-6;
    os << gnn::to_string(a) << fmt(" max |dp| %.1e; ", worst);
  }
  os << "50 graphs per architecture, tol 1e-6";
  return {ok, os.str()};
}

// ---------------------------------------------------------------- 6

Outcome metric_oracles() {
  std::size_t cases = 0, bad = 0;
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<int> p(n), y(n);
    for (unsigned pm = 0; pm < (1u << n); ++pm)
      for (unsigned ym = 0; ym < (1u << n); ++ym) {
        std::size_t tp = 0, fp = 0, fn = 0, hit = 0;
        for (std::size_t i = 0; i < n; ++i) {
          p[i] = (pm >> i) & 1;
          y[i] = (ym >> i) & 1;
          hit += p[i] == y[i];
          tp += p[i] && y[i];
          fp += p[i] && !y[i];
          fn += !p[i] && y[i];
        }
        const double prec = tp + fp ? double(tp) / double(tp + fp) : 0, rec = tp + fn ? double(tp) / double(tp + fn) : 0;
        const double f1_ref = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
        bad += accuracy(p, y) != double(hit) / double(n);
        bad += std::abs(f1(p, y) - f1_ref) > 1e-15;
        cases += 2;
      }
  }
  // AUROC: every labelling with both classes against every score vector over a
  // three-level alphabet (so ties are exercised), n <= 8.
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) s[i] = double(c % 3) * 0.5;
      for (unsigned ym = 1; ym + 1 < (1u << n); ++ym) {
        double wins = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i) y[i] = (ym >> i) & 1;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (y[i] && !y[j]) {
              pairs += 1;
              wins += s[i] > s[j] ? 1 : s[i] == s[j] ? 0.5 : 0;
            }
        bad += std::abs(auroc(s, y) - wins / pairs) > 1e-15;
        ++cases;
      }
    }
  }
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      y[i] = int(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(auroc(s, y) - roc_trapezoid(s, y)));
  }
  return {bad == 0 && worst <= 1e-9,
          fmt("%zu exhaustive cases (n <= 8), %zu mismatches; auroc vs trapezoid on 100 vectors max diff %.1e (tol 1e-9)",
              cases, bad, worst)};
}

// ---------------------------------------------------------------- 7

double desk_run(const std::vector<BrainGraph>& graphs, gnn::Arch arch, std::string& log) {
  train::InMemorySource<float> src(graphs, false);
  train::SplitSpec ss;
  ss.seed = 7;
  const train::Split sp = train::split(src.labels(), ss);
  const gnn::ModelSpec base{arch, 8, 2, 2};
  const train::GridSpec grid{{1e-2, 1e-3}, {8, 16}, {4, 8}, 10};
  const auto res = train::grid_search<float>(src, sp, base, grid, 7, 0);
  log += fmt("%s=%.2f(%.0fs) ", std::string(gnn::to_string(arch)).c_str(), res.test.accuracy, res.wall_seconds);
  return res.test.accuracy;
}

Outcome desk_ordering() {
  Stopwatch sw;
  synth::SynthConfig cfg;
  cfg.n_graphs = 200;
  cfg.voxels = 1000;
  cfg.t_len = 30;
  cfg.seed = 7;
  cfg.workers = 0;
  std::string log = "topology: ";
  cfg.effect = synth::ClassEffect::Topology;
  const auto topo = synth::gen_graphs(cfg);
  const double gcn = desk_run(topo, gnn::Arch::GCN, log);
  const double gat = desk_run(topo, gnn::Arch::GAT, log);
  const double ffn = desk_run(topo, gnn::Arch::FFN, log);
  bool ok = gcn >= 0.85 && gat >= 0.85 && ffn <= 0.65;
  log += "| null: ";
  cfg.effect = synth::ClassEffect::None;
  const auto null = synth::gen_graphs(cfg);
  for (gnn::Arch a : gnn::kAllArchs) {
    const double acc = desk_run(null, a, log);
    ok = ok && acc >= 0.35 && acc <= 0.65;
  }
  log += fmt("| need gcn,gat >= 0.85, ffn <= 0.65, null in [0.35, 0.65]; %.0f s on %u worker(s)", sw.seconds(),
             resolve_workers(0));
  return {ok, log};
}

// ---------------------------------------------------------------- 8

Outcome degree_diagnostic() {
  Stopwatch sw;
  synth::SynthConfig cfg;  // default preset
  cfg.workers = 0;
  const auto graphs = synth::gen_graphs(cfg);
  double lo = 1e9, hi = 0, sum = 0;
  for (const auto& g : graphs) {
    const double d = degree_report(g).mean_degree;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    sum += d;
  }
  return {lo >= 80 && hi <= 120,
          fmt("%zu graphs (T=%u, %zu voxels): mean degree %.1f, range [%.1f, %.1f], need [80, 120]; %.0f s",
              graphs.size(), cfg.t_len, cfg.voxels, sum / double(graphs.size()), lo, hi, sw.seconds())};
}

// ---------------------------------------------------------------- 9

Outcome bench_budget() {
  const BenchReport r = bench(20000, 150, 0, 512, 7);
  return {r.wall_time_seconds <= 300,
          fmt("20000 x 150: %llu pairs, %zu edges, mean degree %.1f, %.1f s on %u worker(s) (limit 300), %.3g pairs/s",
              (unsigned long long)r.pair_count, r.edge_count, r.mean_degree, r.wall_time_seconds, r.workers,
              r.pairs_per_second)};
}

// ---------------------------------------------------------------- 10

template <typename T, typename Enc, typename Dec, typename Write>
bool file_round_trip(const fs::path& path, const T& value, Enc enc, Dec dec, Write write) {
  write(path, value);
  const auto first = io::read_file(path);
  const T back = dec(first);
  write(path, back);
  return io::read_file(path) == first && enc(back) == first;
}

Outcome round_trips() {
  const auto dir = testutil::temp_dir("acceptance_rt");
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 50.0);
  std::size_t bad_vox = 0, bad_bgr = 0, bad_mdl = 0;
  for (int i = 0; i < 100; ++i) {
    const Dims d{std::uint32_t(1 + rng() % 6), std::uint32_t(1 + rng() % 6), std::uint32_t(1 + rng() % 6)};
    const std::uint32_t t = std::uint32_t(2 + rng() % 12);
    std::vector<float> data(std::size_t(d.x) * d.y * d.z * t);
    for (auto& v : data) v = float(g(rng));
    const Volume4D vol(d, t, std::move(data));
    bad_vox += !file_round_trip(dir / "v.vox1", vol, encode_volume, decode_volume, write_volume);

    BrainGraph bg = testutil::random_graph(1 + rng() % 40, std::uint32_t(2 + rng() % 10), 0.3, rng);
    if (rng() % 3) bg.label = Label(rng() % 2);
    bad_bgr += !file_round_trip(dir / "g.bgr1", bg, encode_graph, decode_graph, write_graph);

    gnn::ModelSpec spec{gnn::kAllArchs[i % 4], std::uint32_t(1 + rng() % 8), std::uint32_t(1 + rng() % 3),
                        std::uint32_t(1 + rng() % 3), bool(rng() % 2)};
    const std::uint32_t mt = std::uint32_t(2 + rng() % 10);
    gnn::Checkpoint<double> ck{spec, mt, gnn::init_params<double>(spec, mt, rng())};
    for (auto& tensor : ck.params.tensors)
      for (auto& v : tensor.value.data) v += g(rng) * 1e-3;
    bad_mdl += !file_round_trip(
        dir / "m.mdl1", ck, [](const auto& c) { return gnn::encode_checkpoint(c); },
        [](const auto& b) { return gnn::decode_checkpoint<double>(b); },
        [](const auto& p, const auto& c) { gnn::write_checkpoint(p, c); });
  }
  return {bad_vox + bad_bgr + bad_mdl == 0,
          fmt("100 instances each: VOX1 %zu, BGR1 %zu, MDL1 %zu byte mismatches", bad_vox, bad_bgr, bad_mdl)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxgraph acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const Criterion all[] = {
      {"PCC oracle equivalence", pcc_oracle},
      {"determinism under parallelism", parallel_determinism},
      {"pair count at 60000 voxels", pair_count_check},
      {"gradient correctness", gradient_checks},
      {"permutation invariance", permutation_invariance},
      {"metric oracles", metric_oracles},
      {"desk-scale architecture ordering", desk_ordering},
      {"degree diagnostic", degree_diagnostic},
      {"correlation performance budget", bench_budget},
      {"format round-trips", round_trips},
  };
  int failed = 0;
  for (int i = 1; i <= 10; ++i) {
    if (only && i != only) continue;
    Outcome o;
    try {
      o = all[i - 1].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << i << " [" << all[i - 1].name << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
