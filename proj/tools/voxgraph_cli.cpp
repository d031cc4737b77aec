// voxgraph: synth, build-graph, stats, train, evaluate, bench.
//
// Exit codes: 0 ok, 1 usage, 2 data or format error, 3 numeric failure.
// Logs are JSON lines on stderr; results go to files or stdout.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "voxgraph/bench.hpp"
#include "voxgraph/formats.hpp"
#include "voxgraph/gnn/checkpoint.hpp"
#include "voxgraph/ingest.hpp"
#include "voxgraph/pcc.hpp"
#include "voxgraph/results_json.hpp"
#include "voxgraph/synthgen.hpp"
#include "voxgraph/training.hpp"

using nlohmann::json;
using namespace voxgraph;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

enum class Level { Error, Warn, Info, Debug };
Level g_level = Level::Info;

void log(Level lv, std::string_view msg, json fields = json::object()) {
  if (lv > g_level) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  fields["level"] = names[int(lv)];
  fields["msg"] = msg;
  std::cerr << fields.dump() << '\n';
}

struct Globals {
  std::uint64_t seed = 7;
  std::string workers = "auto";
  std::string log_level = "info";

  unsigned worker_count() const { return workers == "auto" ? 0u : unsigned(std::stoul(workers)); }
};

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::string preset = "topology";
  std::size_t n = 200, voxels = 1000;
  std::uint32_t t = 120;
  double tau = 0.9, autocorrelation = 0.0;
  std::string out;
};

int run_synth(const SynthArgs& a, const Globals& g) {
  synth::SynthConfig cfg;
  cfg.effect = *synth::parse_effect(a.preset);
  cfg.n_graphs = a.n;
  cfg.voxels = a.voxels;
  cfg.t_len = a.t;
  cfg.tau = a.tau;
  cfg.autocorrelation = a.autocorrelation;
  cfg.seed = g.seed;
  cfg.workers = g.worker_count();
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = synth::gen_dataset(cfg, a.out);
  log(Level::Info, "synth done",
      {{"preset", a.preset},
       {"graphs", ds.size()},
       {"manifest", (std::filesystem::path(a.out) / "manifest.tsv").string()},
       {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
  return kOk;
}

// ------------------------------------------------------------------ build-graph

struct BuildArgs {
  std::string input, out, mask;
  double tau = 0.9, epsilon = 1e-12;
  std::size_t tile = 512;
  bool stats = false;
  int label = -1;
};

int run_build(const BuildArgs& a, const Globals& g) {
  const Volume4D vol = parse_volume(a.input);
  IngestConfig ic;
  ic.dead_voxel_epsilon = a.epsilon;
  if (!a.mask.empty()) ic.mask_path = a.mask;
  ic.workers = resolve_workers(g.worker_count());
  const VoxelSet vs = extract_voxels(vol, ic);
  log(Level::Debug, "voxels extracted", {{"n", vs.n()}, {"t_len", vs.t_len}});
  PccConfig pc;
  pc.threshold = a.tau;
  pc.tile_size = a.tile;
  pc.workers = g.worker_count();
  const auto t0 = std::chrono::steady_clock::now();
  BrainGraph graph = correlate_all(vs, pc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (a.label >= 0) graph.label = Label(a.label);
  write_graph(a.out, graph);
  if (a.stats) {
    const json rec = {{"n", graph.n()},
                      {"edge_count", graph.edges.size()},
                      {"mean_degree", degree_report(graph).mean_degree},
                      {"wall_time_seconds", secs},
                      {"pairs_per_second", secs > 0 ? double(pair_count(graph.n())) / secs : 0.0}};
    std::cout << rec.dump() << std::endl;
  }
  log(Level::Info, "graph written", {{"out", a.out}, {"edges", graph.edges.size()}});
  return kOk;
}

// ------------------------------------------------------------------ stats

int run_stats(const std::string& input) {
  const BrainGraph graph = read_graph(input);
  const auto rep = degree_report(graph);
  json hist = json::object();
  for (const auto& [deg, count] : rep.histogram) hist[std::to_string(deg)] = count;
  json j = {{"n", graph.n()},
            {"t_len", graph.t_len},
            {"edge_count", graph.edges.size()},
            {"mean_degree", rep.mean_degree},
            {"degree_histogram", hist}};
  j["label"] = graph.label ? json(int(*graph.label)) : json(nullptr);
  std::cout << j.dump() << std::endl;
  return kOk;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string manifest, arch = "gcn", out, model;
  std::vector<double> lr{1e-3};
  std::vector<std::size_t> batch{8};
  std::vector<std::uint32_t> hidden{16};
  std::size_t epochs = 50;
  std::uint32_t layers = 2, heads = 4;
  bool weighted = false;
};

int run_train(const TrainArgs& a, const Globals& g) {
  GraphDataset ds = read_manifest(a.manifest);
  validate(ds);
  train::FileSource<float> src(std::move(ds), a.weighted);
  train::SplitSpec ss;
  ss.seed = g.seed;
  const train::Split sp = train::split(src.labels(), ss);
  gnn::ModelSpec spec;
  spec.arch = *gnn::parse_arch(a.arch);
  spec.num_mp_layers = a.layers;
  spec.gat_heads = a.heads;
  spec.weighted_messages = a.weighted;
  const train::GridSpec grid{a.lr, a.batch, a.hidden, a.epochs};
  log(Level::Info, "training",
      {{"arch", a.arch}, {"train", sp.train.size()}, {"val", sp.val.size()}, {"test", sp.test.size()}});
  const auto res = train::grid_search<float>(src, sp, spec, grid, g.seed, g.worker_count());
  for (const auto& c : res.cells)
    if (c.failed) log(Level::Warn, "grid cell failed", {{"learning_rate", c.learning_rate}, {"error", c.error}});
  json j = train::to_json(res);
  j["manifest"] = a.manifest;
  write_json(a.out, j);
  if (!a.model.empty()) {
    gnn::Checkpoint<float> ck{res.chosen_spec, std::uint32_t(src.get(sp.train.front()).t_len), res.chosen_params};
    gnn::write_checkpoint(a.model, ck);
  }
  log(Level::Info, "training done",
      {{"test_accuracy", res.test.accuracy}, {"chosen_cell", res.chosen}, {"seconds", res.wall_seconds}});
  return kOk;
}

// ------------------------------------------------------------------ evaluate

int run_evaluate(const std::string& model, const std::string& manifest, const std::string& out, const Globals& g) {
  const auto ck = gnn::read_checkpoint<float>(model);
  GraphDataset ds = read_manifest(manifest);
  if (ds.entries.empty()) throw ContractError("manifest lists no graphs");
  train::FileSource<float> src(std::move(ds), ck.spec.weighted_messages);
  std::vector<std::size_t> idx(src.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i : idx)
    if (src.get(i).t_len != ck.t_len)
      throw ContractError("graph " + std::to_string(i) + " has t_len " + std::to_string(src.get(i).t_len) +
                          " but the model expects " + std::to_string(ck.t_len));
  const auto ev = train::evaluate<float>(src, idx, ck.spec, ck.params, resolve_workers(g.worker_count()));
  json j = train::to_json(ev);
  j["model"] = train::to_json(ck.spec);
  if (out.empty())
    std::cout << j.dump() << std::endl;
  else
    write_json(out, j);
  return kOk;
}

// ------------------------------------------------------------------ bench

int run_bench(std::size_t voxels, std::uint32_t t, std::size_t tile, const Globals& g) {
  const BenchReport r = bench(voxels, t, g.worker_count(), tile, g.seed);
  const json j = {{"n", r.n},
                  {"t", r.t},
                  {"workers", r.workers},
                  {"tile", r.tile},
                  {"pair_count", r.pair_count},
                  {"edge_count", r.edge_count},
                  {"mean_degree", r.mean_degree},
                  {"wall_time_seconds", r.wall_time_seconds},
                  {"pairs_per_second", r.pairs_per_second}};
  std::cout << j.dump() << std::endl;
  return kOk;
}

CLI::Validator workers_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        if (s == "auto") return {};
        try {
          std::size_t pos = 0;
          if (std::stoul(s, &pos) >= 1 && pos == s.size()) return {};
        } catch (const std::exception&) {
        }
        return "expected a positive integer or 'auto'";
      },
      "INT|auto");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voxel-wise correlation graphs and graph classifiers.\n"
               "Every subcommand is reproducible from its flags and --seed."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.set_version_flag("--version",
                       std::string("voxgraph ") + VOXGRAPH_VERSION + "\nformats: VOX1 MSK1 BGR1 MDL1");
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads, or 'auto'")->check(workers_validator())->capture_default_str();
  app.add_option("--log-level", g.log_level, "error|warn|info|debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
      ->capture_default_str();

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labelled synthetic graph dataset");
  synth_cmd->add_option("--preset", sa.preset)->check(CLI::IsMember({"topology", "feature", "null"}))->capture_default_str();
  synth_cmd->add_option("--n", sa.n, "Number of graphs")->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--voxels", sa.voxels)->check(CLI::Range(std::size_t(2), std::size_t(1) << 32))->capture_default_str();
  synth_cmd->add_option("--t", sa.t, "Time steps")->check(CLI::Range(2u, 1u << 20))->capture_default_str();
  synth_cmd->add_option("--tau", sa.tau)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  synth_cmd->add_option("--autocorrelation", sa.autocorrelation, "AR(1) coefficient")
      ->check(CLI::Range(0.0, 0.999))
      ->capture_default_str();
  synth_cmd->add_option("--out", sa.out, "Output directory")->required();

  BuildArgs ba;
  auto* build_cmd = app.add_subcommand("build-graph", "Build a BGR1 correlation graph from a VOX1 volume");
  build_cmd->add_option("--input", ba.input, "VOX1 volume")->required();
  build_cmd->add_option("--out", ba.out, "BGR1 output")->required();
  build_cmd->add_option("--tau", ba.tau, "Correlation threshold (strict)")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  build_cmd->add_option("--tile", ba.tile)->check(CLI::PositiveNumber)->capture_default_str();
  build_cmd->add_option("--epsilon", ba.epsilon, "Dead-voxel variance floor")->check(CLI::NonNegativeNumber)->capture_default_str();
  build_cmd->add_option("--mask", ba.mask, "MSK1 mask");
  build_cmd->add_option("--label", ba.label, "Class label stored in the graph")->check(CLI::Range(0, 1));
  build_cmd->add_flag("--stats", ba.stats, "Print a JSON stats record");

  std::string stats_input;
  auto* stats_cmd = app.add_subcommand("stats", "Print degree statistics of a BGR1 graph");
  stats_cmd->add_option("--input", stats_input, "BGR1 graph")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Grid search, then evaluate the chosen model on the test split");
  train_cmd->add_option("--manifest", ta.manifest)->required();
  train_cmd->add_option("--arch", ta.arch)->check(CLI::IsMember({"ffn", "gcn", "gat", "gcrn"}))->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "Learning rates")->delimiter(',')->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", ta.batch, "Batch sizes")->delimiter(',')->check(CLI::PositiveNumber);
  train_cmd->add_option("--hidden", ta.hidden, "Hidden units")->delimiter(',')->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--layers", ta.layers, "Message-passing layers (GCN, GAT)")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--heads", ta.heads, "Attention heads (GAT)")->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_flag("--weighted", ta.weighted, "Scale GCN/GCRN messages by edge weight");
  train_cmd->add_option("--out", ta.out, "Results JSON")->required();
  train_cmd->add_option("--model", ta.model, "Write the chosen model as MDL1");

  std::string eval_model, eval_manifest, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a saved model on every graph of a manifest");
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--out", eval_out, "Write JSON here instead of stdout");

  std::size_t bench_voxels = 20000, bench_tile = 512;
  std::uint32_t bench_t = 150;
  auto* bench_cmd = app.add_subcommand("bench", "Time the correlation engine on synthetic data");
  bench_cmd->add_option("--voxels", bench_voxels)->check(CLI::Range(std::size_t(2), std::size_t(1) << 32))->capture_default_str();
  bench_cmd->add_option("--t", bench_t)->check(CLI::Range(2u, 1u << 20))->capture_default_str();
  bench_cmd->add_option("--tile", bench_tile)->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }
  g_level = g.log_level == "error" ? Level::Error
            : g.log_level == "warn" ? Level::Warn
            : g.log_level == "debug" ? Level::Debug
                                     : Level::Info;

  try {
    if (*synth_cmd) return run_synth(sa, g);
    if (*build_cmd) return run_build(ba, g);
    if (*stats_cmd) return run_stats(stats_input);
    if (*train_cmd) return run_train(ta, g);
    if (*eval_cmd) return run_evaluate(eval_model, eval_manifest, eval_out, g);
    if (*bench_cmd) return run_bench(bench_voxels, bench_t, bench_tile, g);
  } catch (const NumericError& e) {
    log(Level::Error, e.what(), {{"kind", "numeric"}, {"layer", e.layer()}});
    return kNumeric;
  } catch (const UndefinedCorrelationError& e) {
    log(Level::Error, e.what(), {{"kind", "numeric"}});
    return kNumeric;
  } catch (const GridError& e) {
    log(Level::Error, e.what(), {{"kind", "numeric"}});
    return kNumeric;
  } catch (const ParseError& e) {
    log(Level::Error, e.what(), {{"kind", "format"}, {"offset", e.offset()}});
    return kData;
  } catch (const Error& e) {
    log(Level::Error, e.what(), {{"kind", "data"}});
    return kData;
  } catch (const std::exception& e) {
    log(Level::Error, e.what(), {{"kind", "internal"}});
    return kData;
  }
  return kUsage;
}
