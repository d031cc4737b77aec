#pragma once

/*
 * Splitting, minibatch Adam training, and the hyperparameter grid search.
 *
 * Graphs are reached through a GraphSource so that callers (and tests) can
 * observe exactly which graphs are read and when. Test graphs are touched
 * only after GraphSource::begin_final_evaluation().
 *
 * Per-graph gradients land in per-slot buffers and are summed in dataset
 * index order, so results do not depend on the worker count.
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "voxgraph/formats.hpp"
#include "voxgraph/gnn/forward.hpp"
#include "voxgraph/metrics.hpp"
#include "voxgraph/parallel.hpp"

namespace voxgraph::train {

using gnn::GraphInput;
using gnn::ModelParams;
using gnn::ModelSpec;

// ---------------------------------------------------------------- graph sources

/// Random-access labelled graphs in model-ready form.
template <typename R>
class GraphSource {
 public:
  virtual ~GraphSource() = default;
  virtual std::size_t size() const = 0;
  /// Labels are known without reading the graph itself.
  virtual int label(std::size_t i) const = 0;
  virtual const GraphInput<R>& get(std::size_t i) = 0;
  /// Called once, immediately before the first read of any test graph.
  virtual void begin_final_evaluation() {}

  std::vector<int> labels() const {
    std::vector<int> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = label(i);
    return out;
  }
};

template <typename R>
class InMemorySource : public GraphSource<R> {
 public:
  explicit InMemorySource(std::vector<GraphInput<R>> graphs) : graphs_(std::move(graphs)) {}
  InMemorySource(const std::vector<BrainGraph>& graphs, bool weighted) {
    for (const auto& g : graphs) {
      if (!g.label) throw ContractError("training graph has no label");
      graphs_.push_back(gnn::make_graph_input<R>(g, weighted));
    }
  }
  std::size_t size() const override { return graphs_.size(); }
  int label(std::size_t i) const override { return graphs_.at(i).label; }
  const GraphInput<R>& get(std::size_t i) override { return graphs_.at(i); }

 private:
  std::vector<GraphInput<R>> graphs_;
};

/// Reads BGR1 files named in a manifest on first use and caches them.
/// Thread-safe; records the order in which graphs were first loaded.
template <typename R>
class FileSource : public GraphSource<R> {
 public:
  FileSource(GraphDataset ds, bool weighted)
      : ds_(std::move(ds)), weighted_(weighted), cache_(ds_.size()), once_(ds_.size()) {}

  std::size_t size() const override { return ds_.size(); }
  int label(std::size_t i) const override { return ds_.entries.at(i).label; }

  const GraphInput<R>& get(std::size_t i) override {
    if (i >= size()) throw ContractError("graph index out of range");
    std::call_once(once_[i], [&] {
      BrainGraph g = read_graph(ds_.entries[i].path);
      if (g.label && int(*g.label) != ds_.entries[i].label)
        throw IoError("label in " + ds_.entries[i].path.string() + " disagrees with the manifest");
      g.label = Label(ds_.entries[i].label);
      cache_[i] = std::make_unique<GraphInput<R>>(gnn::make_graph_input<R>(g, weighted_));
      std::lock_guard lk(log_mu_);
      load_log_.push_back(i);
    });
    return *cache_[i];
  }

  std::vector<std::size_t> load_log() const {
    std::lock_guard lk(log_mu_);
    return load_log_;
  }

 private:
  GraphDataset ds_;
  bool weighted_;
  std::vector<std::unique_ptr<GraphInput<R>>> cache_;
  std::vector<std::once_flag> once_;
  mutable std::mutex log_mu_;
  std::vector<std::size_t> load_log_;
};

// ---------------------------------------------------------------- split

struct SplitSpec {
  double train = 0.8, val = 0.1, test = 0.1;
  std::uint64_t seed = 0;
  std::size_t min_per_class = 10;

  void check() const {
    if (!(train > 0 && val > 0 && test > 0)) throw ContractError("split fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");
  }
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Stratified split. Per class of size n: round(train*n) / round(val*n) /
/// remainder, drawn from a seeded shuffle; every list is sorted ascending.
inline Split split(std::span<const int> labels, const SplitSpec& spec) {
  spec.check();
  std::mt19937_64 rng(spec.seed);
  Split out;
  for (int c = 0; c <= 1; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    if (members.size() < spec.min_per_class)
      throw SplitError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                       " graphs; at least " + std::to_string(spec.min_per_class) + " required");
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = double(members.size());
    const auto n_train = std::size_t(std::llround(spec.train * n));
    const auto n_val = std::size_t(std::llround(spec.val * n));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= members.size())
      throw SplitError("class " + std::to_string(c) + " too small for a non-empty three-way split");
    out.train.insert(out.train.end(), members.begin(), members.begin() + n_train);
    out.val.insert(out.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    out.test.insert(out.test.end(), members.begin() + n_train + n_val, members.end());
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

// ---------------------------------------------------------------- optimizer

template <typename R>
struct Adam {
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ModelParams<R> m, v;
  std::uint64_t t = 0;

  Adam(const ModelParams<R>& like, double learning_rate) : lr(learning_rate), m(like.zeros_like()), v(like.zeros_like()) {}

  void step(ModelParams<R>& params, const ModelParams<R>& grad) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].data;
      const auto& g = grad[i].data;
      auto& mi = m[i].data;
      auto& vi = v[i].data;
      for (std::size_t k = 0; k < p.size(); ++k) {
        mi[k] = R(beta1 * mi[k] + (1 - beta1) * g[k]);
        vi[k] = R(beta2 * vi[k] + (1 - beta2) * g[k] * g[k]);
        const double mhat = mi[k] / c1, vhat = vi[k] / c2;
        p[k] = R(p[k] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

// ---------------------------------------------------------------- training

struct TrainConfig {
  ModelSpec spec;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void check() const {
    spec.check();
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ContractError("learning rate must be >= 0");
    if (batch_size == 0) throw ContractError("batch size must be positive");
    if (epochs == 0) throw ContractError("epochs must be positive");
  }
};

struct EpochRecord {
  double train_loss = 0;
  double val_accuracy = 0;
};

template <typename R>
struct TrainResult {
  ModelParams<R> params;  // from the best-validation epoch
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  double best_val_accuracy = -1;
};

/// Class-1 probabilities for `indices`, in the same order.
template <typename R>
std::vector<double> predict(GraphSource<R>& src, std::span<const std::size_t> indices, const ModelSpec& spec,
                            const ModelParams<R>& params, unsigned workers = 1) {
  std::vector<double> out(indices.size());
  parallel_for(indices.size(), workers,
               [&](std::size_t k, unsigned) { out[k] = double(gnn::model_forward(src.get(indices[k]), spec, params)); });
  return out;
}

template <typename R>
std::vector<int> labels_of(const GraphSource<R>& src, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(src.label(i));
  return out;
}

/// Minibatch Adam on mean BCE. Keeps the parameters of the epoch with the
/// highest validation accuracy (earliest epoch on ties). Throws NumericError
/// if the forward pass or the parameters become non-finite.
template <typename R>
TrainResult<R> train_model(GraphSource<R>& src, std::span<const std::size_t> train_idx,
                           std::span<const std::size_t> val_idx, const TrainConfig& cfg) {
  cfg.check();
  if (train_idx.empty()) throw ContractError("empty training set");
  if (val_idx.empty()) throw ContractError("empty validation set");
  const std::size_t t_len = src.get(train_idx[0]).t_len;
  ModelParams<R> params = gnn::init_params<R>(cfg.spec, t_len, cfg.seed);
  Adam<R> opt(params, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const std::vector<int> val_labels = labels_of(src, val_idx);

  const std::size_t slots = std::min(cfg.batch_size, train_idx.size());
  std::vector<ModelParams<R>> slot_grads(slots, params.zeros_like());
  std::vector<gnn::ForwardTrace<R>> traces(slots);
  std::vector<double> slot_loss(slots);
  ModelParams<R> batch_grad = params.zeros_like();

  TrainResult<R> res;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
      std::sort(batch.begin(), batch.end());
      parallel_for(batch.size(), cfg.workers, [&](std::size_t k, unsigned) {
        const GraphInput<R>& g = src.get(batch[k]);
        const int y = src.label(batch[k]);
        slot_grads[k].set_zero();
        const R logit = gnn::model_logit(g, cfg.spec, params, traces[k]);
        slot_loss[k] = double(gnn::bce_with_logit(logit, y));
        gnn::model_backward_from_trace(g, cfg.spec, params, traces[k], gnn::sigmoid(logit) - R(y), slot_grads[k]);
      });
      batch_grad.set_zero();
      for (std::size_t k = 0; k < batch.size(); ++k) {
        batch_grad.add_scaled(slot_grads[k], R(1));
        loss_sum += slot_loss[k];
      }
      for (auto& t : batch_grad.tensors)
        for (auto& v : t.value.data) v /= R(batch.size());
      opt.step(params, batch_grad);
      for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i].all_finite()) throw NumericError(-1, "parameter " + params.tensors[i].name + " is not finite");
    }
    const auto scores = predict(src, val_idx, cfg.spec, params, cfg.workers);
    const double val_acc = accuracy(threshold_predictions(scores), val_labels);
    res.curve.push_back({loss_sum / double(order.size()), val_acc});
    if (val_acc > res.best_val_accuracy) {
      res.best_val_accuracy = val_acc;
      res.best_epoch = epoch;
      res.params = params;
    }
  }
  return res;
}

// ---------------------------------------------------------------- grid search

struct GridSpec {
  std::vector<double> learning_rates;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::uint32_t> hidden_units;
  std::size_t epochs = 50;

  void check() const {
    if (learning_rates.empty() || batch_sizes.empty() || hidden_units.empty())
      throw GridError("grid lists must be non-empty");
    for (double lr : learning_rates)
      if (!(lr >= 0) || !std::isfinite(lr)) throw GridError("learning rates must be finite and >= 0");
    for (auto b : batch_sizes)
      if (b == 0) throw GridError("batch sizes must be positive");
    for (auto h : hidden_units)
      if (h == 0) throw GridError("hidden units must be positive");
    if (epochs == 0) throw GridError("epochs must be positive");
  }
};

struct CellResult {
  double learning_rate = 0;
  std::size_t batch_size = 0;
  std::uint32_t hidden_units = 0;
  bool failed = false;
  std::string error;
  double val_accuracy = 0, val_f1 = 0, val_auroc = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> curve;
  double seconds = 0;
};

/// Cell ordering used to break validation-accuracy ties: lowest learning rate,
/// then smallest batch, then fewest units.
inline bool cell_preferred(const CellResult& a, const CellResult& b) {
  if (a.val_accuracy != b.val_accuracy) return a.val_accuracy > b.val_accuracy;
  if (a.learning_rate != b.learning_rate) return a.learning_rate < b.learning_rate;
  if (a.batch_size != b.batch_size) return a.batch_size < b.batch_size;
  return a.hidden_units < b.hidden_units;
}

struct TestEvaluation {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  std::vector<int> predictions;
  std::vector<int> labels;
  double accuracy = 0, f1 = 0;
  std::optional<double> auroc;  // absent when the test set has one class
};

template <typename R>
TestEvaluation evaluate(GraphSource<R>& src, std::span<const std::size_t> indices, const ModelSpec& spec,
                        const ModelParams<R>& params, unsigned workers = 1) {
  TestEvaluation ev;
  ev.indices.assign(indices.begin(), indices.end());
  ev.scores = predict(src, indices, spec, params, workers);
  ev.predictions = threshold_predictions(ev.scores);
  ev.labels = labels_of(src, indices);
  ev.accuracy = voxgraph::accuracy(ev.predictions, ev.labels);
  ev.f1 = voxgraph::f1(ev.predictions, ev.labels);
  const bool both = std::count(ev.labels.begin(), ev.labels.end(), 1) > 0 &&
                    std::count(ev.labels.begin(), ev.labels.end(), 0) > 0;
  if (both) ev.auroc = voxgraph::auroc(ev.scores, ev.labels);
  return ev;
}

template <typename R>
struct ExperimentResult {
  ModelSpec base_spec;
  GridSpec grid;
  std::uint64_t seed = 0;
  Split split;
  std::vector<CellResult> cells;  // learning rate major, then batch, then units
  std::size_t chosen = 0;
  ModelSpec chosen_spec;
  ModelParams<R> chosen_params;
  TestEvaluation test;
  double wall_seconds = 0;
};

/// Trains every cell on split.train, selects on split.val, then evaluates the
/// chosen model once on split.test. Cells run on up to `workers` threads.
template <typename R>
ExperimentResult<R> grid_search(GraphSource<R>& src, const Split& sp, const ModelSpec& base, const GridSpec& grid,
                                std::uint64_t seed, unsigned workers = 1) {
  grid.check();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult<R> res;
  res.base_spec = base;
  res.grid = grid;
  res.seed = seed;
  res.split = sp;
  for (double lr : grid.learning_rates)
    for (std::size_t b : grid.batch_sizes)
      for (std::uint32_t h : grid.hidden_units) {
        CellResult c;
        c.learning_rate = lr;
        c.batch_size = b;
        c.hidden_units = h;
        res.cells.push_back(c);
      }
  const std::size_t n_cells = res.cells.size();
  workers = resolve_workers(workers);
  const unsigned inner = n_cells >= workers ? 1u : std::max(1u, workers / unsigned(n_cells));

  // Load train and validation graphs up front so that cell threads only read the cache.
  parallel_for(sp.train.size() + sp.val.size(), workers, [&](std::size_t k, unsigned) {
    src.get(k < sp.train.size() ? sp.train[k] : sp.val[k - sp.train.size()]);
  });

  std::vector<std::optional<ModelParams<R>>> params(n_cells);
  const std::vector<int> val_labels = labels_of(src, sp.val);
  parallel_for(n_cells, n_cells >= workers ? workers : 1u, [&](std::size_t i, unsigned) {
    CellResult& c = res.cells[i];
    const auto c0 = std::chrono::steady_clock::now();
    TrainConfig cfg;
    cfg.spec = base;
    cfg.spec.hidden_units = c.hidden_units;
    cfg.learning_rate = c.learning_rate;
    cfg.batch_size = c.batch_size;
    cfg.epochs = grid.epochs;
    cfg.seed = seed;
    cfg.workers = inner;
    try {
      auto tr = train_model(src, sp.train, sp.val, cfg);
      const auto scores = predict(src, sp.val, cfg.spec, tr.params, inner);
      const auto preds = threshold_predictions(scores);
      c.val_accuracy = accuracy(preds, val_labels);
      c.val_f1 = f1(preds, val_labels);
      c.val_auroc = auroc(scores, val_labels);
      c.best_epoch = tr.best_epoch;
      c.curve = std::move(tr.curve);
      params[i] = std::move(tr.params);
    } catch (const NumericError& e) {
      c.failed = true;
      c.error = e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
  });

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < n_cells; ++i) {
    if (res.cells[i].failed) continue;
    if (!best || cell_preferred(res.cells[i], res.cells[*best])) best = i;
  }
  if (!best) throw GridError("every grid cell failed numerically");
  res.chosen = *best;
  res.chosen_spec = base;
  res.chosen_spec.hidden_units = res.cells[*best].hidden_units;
  res.chosen_params = std::move(*params[*best]);

  src.begin_final_evaluation();
  res.test = evaluate(src, sp.test, res.chosen_spec, res.chosen_params, workers);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace voxgraph::train
