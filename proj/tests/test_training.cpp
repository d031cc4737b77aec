#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "voxgraph/results_json.hpp"
#include "voxgraph/training.hpp"

using namespace voxgraph;
using namespace voxgraph::train;

namespace {

// Brute-force oracles, straight from the definitions.
double oracle_accuracy(const std::vector<int>& p, const std::vector<int>& y) {
  int hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == y[i];
  return double(hit) / double(p.size());
}

double oracle_f1(const std::vector<int>& p, const std::vector<int>& y) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && y[i]) tp++;
    if (p[i] && !y[i]) fp++;
    if (!p[i] && y[i]) fn++;
  }
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0, rec = tp + fn > 0 ? tp / (tp + fn) : 0;
  return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
}

double oracle_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

std::vector<int> bits(unsigned mask, std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (mask >> i) & 1u;
  return out;
}

/// Three-node graphs whose class is carried by the sign of every sample.
std::vector<BrainGraph> separable_graphs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<BrainGraph> out;
  for (std::size_t i = 0; i < n; ++i) {
    BrainGraph bg;
    bg.t_len = 2;
    bg.label = Label(i % 2);
    const double sign = i % 2 ? 1.0 : -1.0;
    for (std::uint32_t v = 0; v < 3; ++v) {
      bg.node_coords.push_back(Coord{v, 0, 0});
      for (int k = 0; k < 2; ++k) bg.node_series.push_back(float(sign + g(rng)));
    }
    bg.edges = {{0, 1, 0.95f}, {1, 2, 0.93f}};
    out.push_back(std::move(bg));
  }
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// Records every read; fails loudly if a test graph is read before final evaluation.
class WatchedSource : public GraphSource<double> {
 public:
  WatchedSource(const std::vector<BrainGraph>& graphs, std::vector<std::size_t> test)
      : inner_(graphs, false), test_(std::move(test)) {}
  std::size_t size() const override { return inner_.size(); }
  int label(std::size_t i) const override { return inner_.label(i); }
  const GraphInput<double>& get(std::size_t i) override {
    if (!final_ && std::binary_search(test_.begin(), test_.end(), i)) ++early_test_reads;
    ++reads;
    return inner_.get(i);
  }
  void begin_final_evaluation() override {
    final_ = true;
    ++final_calls;
  }
  int early_test_reads = 0, final_calls = 0, reads = 0;

 private:
  InMemorySource<double> inner_;
  std::vector<std::size_t> test_;
  bool final_ = false;
};

}  // namespace

// ---------------------------------------------------------------- split

TEST(Split, HundredGraphsEightyTenTen) {
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = int(i % 2);
  const Split s = split(labels, SplitSpec{0.8, 0.1, 0.1, 3});
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    const auto pos = std::count_if(part->begin(), part->end(), [&](std::size_t i) { return labels[i] == 1; });
    EXPECT_EQ(std::size_t(pos) * 2, part->size());
  }
}

TEST(Split, DeterministicForSeed) {
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = int(i % 3 == 0);
  const Split a = split(labels, SplitSpec{0.8, 0.1, 0.1, 9});
  const Split b = split(labels, SplitSpec{0.8, 0.1, 0.1, 9});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  const Split c = split(labels, SplitSpec{0.8, 0.1, 0.1, 10});
  EXPECT_NE(a.train, c.train);
}

TEST(Split, SingleClassFails) {
  EXPECT_THROW(split(std::vector<int>(10, 0), SplitSpec{}), SplitError);
  std::vector<int> small(30, 0);
  for (int i = 0; i < 9; ++i) small[i] = 1;
  EXPECT_THROW(split(small, SplitSpec{}), SplitError);
  EXPECT_THROW(split(std::vector<int>(40, 0), SplitSpec{0.8, 0.1, 0.2, 0}), ContractError);
}

TEST(Split, DisjointCoveringStratifiedProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n0 = 10 + rng() % 40, n1 = 10 + rng() % 40;
    std::vector<int> labels(n0, 0);
    labels.insert(labels.end(), n1, 1);
    std::shuffle(labels.begin(), labels.end(), rng);
    const Split s = split(labels, SplitSpec{0.8, 0.1, 0.1, rng()});
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
      for (int c = 0; c <= 1; ++c)
        EXPECT_TRUE(std::any_of(part->begin(), part->end(), [&](std::size_t i) { return labels[i] == c; }));
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, iota_n(labels.size()));
    const auto train_pos = std::size_t(std::count_if(s.train.begin(), s.train.end(), [&](auto i) { return labels[i]; }));
    EXPECT_EQ(train_pos, std::size_t(std::llround(0.8 * double(n1))));
  }
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, AccuracyExamples) {
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{1, 1, 1, 1, 1, 1, 1, 0, 0, 0}, std::vector<int>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}),
                   0.7);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(std::vector<int>{1, 0, 0}, std::vector<int>{0, 1, 1}), 0.0);
  EXPECT_THROW(accuracy(std::vector<int>{1}, std::vector<int>{1, 0}), ContractError);
}

TEST(Metrics, F1Examples) {
  // TP=2, FP=1, FN=1
  EXPECT_NEAR(f1(std::vector<int>{1, 1, 1, 0, 0}, std::vector<int>{1, 1, 0, 1, 0}), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(f1(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(f1(std::vector<int>{0, 0}, std::vector<int>{0, 0}), 0.0);
  EXPECT_THROW(f1(std::vector<int>{}, std::vector<int>{}), ContractError);
}

TEST(Metrics, AurocExamples) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ContractError);
}

TEST(Metrics, ExhaustiveOraclesUpToEight) {
  for (std::size_t n = 1; n <= 8; ++n) {
    for (unsigned pm = 0; pm < (1u << n); ++pm) {
      const auto p = bits(pm, n);
      for (unsigned ym = 0; ym < (1u << n); ++ym) {
        const auto y = bits(ym, n);
        ASSERT_DOUBLE_EQ(accuracy(p, y), oracle_accuracy(p, y));
        ASSERT_NEAR(f1(p, y), oracle_f1(p, y), 1e-15);
      }
    }
  }
  // AUROC: scores from a 3-level alphabet (forcing ties) over every labelling.
  std::mt19937_64 rng(8);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> s(n);
      for (auto& v : s) v = double(rng() % 3) / 2.0;
      for (unsigned ym = 1; ym + 1 < (1u << n); ++ym) {
        const auto y = bits(ym, n);
        ASSERT_NEAR(auroc(s, y), oracle_auroc(s, y), 1e-15);
        ASSERT_NEAR(roc_trapezoid(s, y), oracle_auroc(s, y), 1e-12);
      }
    }
  }
}

TEST(Metrics, AurocMatchesTrapezoidAndIsMonotoneInvariant) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 3 == 0 ? std::round(u(rng) * 5) / 5 : u(rng);
      y[i] = int(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auroc(s, y);
    EXPECT_NEAR(a, roc_trapezoid(s, y), 1e-9);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
    EXPECT_NEAR(auroc(t, y), a, 1e-12);
  }
}

// ---------------------------------------------------------------- training

TEST(TrainModel, ZeroLearningRateKeepsInitialParams) {
  InMemorySource<double> src(separable_graphs(20, 1), false);
  TrainConfig cfg;
  cfg.spec = ModelSpec{gnn::Arch::GCN, 4};
  cfg.learning_rate = 0;
  cfg.epochs = 3;
  cfg.seed = 5;
  const auto idx = iota_n(20);
  const auto res = train_model<double>(src, std::span(idx).first(16), std::span(idx).subspan(16), cfg);
  const auto init = gnn::init_params<double>(cfg.spec, 2, 5);
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(res.params[i].data, init[i].data);
}

TEST(TrainModel, SeparableToySetReachesPerfectTrainAccuracy) {
  for (gnn::Arch a : {gnn::Arch::FFN, gnn::Arch::GCN}) {
    InMemorySource<double> src(separable_graphs(40, 2), false);
    TrainConfig cfg;
    cfg.spec = ModelSpec{a, 4};
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 4;
    cfg.epochs = 50;
    cfg.seed = 3;
    const auto idx = iota_n(40);
    const auto train_idx = std::span(idx).first(32);
    const auto res = train_model<double>(src, train_idx, std::span(idx).subspan(32), cfg);
    const auto ev = evaluate<double>(src, train_idx, cfg.spec, res.params);
    EXPECT_DOUBLE_EQ(ev.accuracy, 1.0) << gnn::to_string(a);
    EXPECT_LT(res.curve.back().train_loss, res.curve.front().train_loss);
  }
}

TEST(TrainModel, BitIdenticalAcrossRunsAndWorkerCounts) {
  std::mt19937_64 rng(6);
  std::vector<BrainGraph> graphs;
  for (int i = 0; i < 24; ++i) {
    BrainGraph g = testutil::random_graph(5 + i % 4, 4, 0.4, rng);
    g.label = Label(i % 2);
    graphs.push_back(g);
  }
  const auto idx = iota_n(24);
  for (gnn::Arch a : gnn::kAllArchs) {
    TrainConfig cfg;
    cfg.spec = ModelSpec{a, 3, 2, 2};
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 5;
    cfg.epochs = 4;
    cfg.seed = 11;
    InMemorySource<float> src(graphs, false);
    const auto r1 = train_model<float>(src, std::span(idx).first(18), std::span(idx).subspan(18), cfg);
    const auto r2 = train_model<float>(src, std::span(idx).first(18), std::span(idx).subspan(18), cfg);
    cfg.workers = 3;
    const auto r3 = train_model<float>(src, std::span(idx).first(18), std::span(idx).subspan(18), cfg);
    for (const auto* r : {&r2, &r3}) {
      ASSERT_EQ(r->curve.size(), r1.curve.size());
      for (std::size_t e = 0; e < r1.curve.size(); ++e) EXPECT_EQ(r->curve[e].train_loss, r1.curve[e].train_loss);
      for (std::size_t i = 0; i < r1.params.size(); ++i) EXPECT_EQ(r->params[i].data, r1.params[i].data);
    }
  }
}

TEST(TrainModel, RejectsBadConfig) {
  InMemorySource<double> src(separable_graphs(4, 1), false);
  const auto idx = iota_n(4);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train_model<double>(src, std::span(idx).first(2), std::span(idx).subspan(2), cfg), ContractError);
  cfg.batch_size = 1;
  EXPECT_THROW(train_model<double>(src, {}, std::span(idx).subspan(2), cfg), ContractError);
}

// ---------------------------------------------------------------- grid search

TEST(GridSearch, SingleCellEqualsTrainThenEvaluate) {
  const auto graphs = separable_graphs(40, 4);
  InMemorySource<double> src(graphs, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 1});
  const ModelSpec spec{gnn::Arch::GCN, 4};
  const GridSpec grid{{1e-2}, {4}, {4}, 10};
  const auto res = grid_search<double>(src, sp, spec, grid, 21);
  TrainConfig cfg{spec, 1e-2, 4, 10, 21};
  const auto tr = train_model<double>(src, sp.train, sp.val, cfg);
  const auto ev = evaluate<double>(src, sp.test, spec, tr.params);
  EXPECT_EQ(res.test.scores, ev.scores);
  EXPECT_EQ(res.test.accuracy, ev.accuracy);
  EXPECT_EQ(res.cells.size(), 1u);
}

TEST(GridSearch, LearningCellBeatsZeroLearningRate) {
  const auto graphs = separable_graphs(60, 5);
  InMemorySource<double> src(graphs, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 2});
  // Zero init head => p = 0.5 => predicts class 1 everywhere at lr = 0.
  ModelSpec spec{gnn::Arch::FFN, 4};
  const auto res = grid_search<double>(src, sp, spec, GridSpec{{0.0, 1e-3}, {4}, {4}, 40}, 8);
  EXPECT_EQ(res.cells[res.chosen].learning_rate, 1e-3);
  EXPECT_GT(res.cells[res.chosen].val_accuracy, res.cells[0].val_accuracy);
}

TEST(GridSearch, StoredAccuracyMatchesSavedPredictions) {
  const auto graphs = separable_graphs(40, 6);
  InMemorySource<double> src(graphs, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 3});
  const auto res = grid_search<double>(src, sp, ModelSpec{gnn::Arch::GAT, 2, 2, 2}, GridSpec{{1e-2}, {4, 8}, {2}, 5}, 4);
  const auto j = to_json(res);
  const auto preds = j["test"]["predictions"].get<std::vector<int>>();
  const auto labels = j["test"]["labels"].get<std::vector<int>>();
  EXPECT_EQ(accuracy(preds, labels), j["test"]["accuracy"].get<double>());
  EXPECT_EQ(j["cells"].size(), 2u);
  EXPECT_EQ(j["chosen_cell"].get<std::size_t>(), res.chosen);
}

TEST(GridSearch, TieRuleAndOrderInvariance) {
  auto cell = [](double lr, std::size_t batch, std::uint32_t hidden, double acc) {
    CellResult r;
    r.learning_rate = lr;
    r.batch_size = batch;
    r.hidden_units = hidden;
    r.val_accuracy = acc;
    return r;
  };
  const auto a = cell(1e-3, 8, 16, 0.8), b = cell(1e-4, 16, 32, 0.8), c = cell(1e-4, 8, 32, 0.8),
             d = cell(1e-4, 8, 16, 0.8);
  EXPECT_TRUE(cell_preferred(b, a));
  EXPECT_TRUE(cell_preferred(c, b));
  EXPECT_TRUE(cell_preferred(d, c));
  EXPECT_TRUE(cell_preferred(cell(1e-2, 32, 64, 0.9), d));
  EXPECT_FALSE(cell_preferred(d, d));

  const auto graphs = separable_graphs(40, 7);
  InMemorySource<double> src(graphs, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 4});
  const ModelSpec spec{gnn::Arch::GCN, 2};
  const auto r1 = grid_search<double>(src, sp, spec, GridSpec{{1e-2, 1e-3}, {4, 8}, {2, 3}, 4}, 5);
  const auto r2 = grid_search<double>(src, sp, spec, GridSpec{{1e-3, 1e-2}, {8, 4}, {3, 2}, 4}, 5, 3);
  const auto& c1 = r1.cells[r1.chosen];
  const auto& c2 = r2.cells[r2.chosen];
  EXPECT_EQ(c1.learning_rate, c2.learning_rate);
  EXPECT_EQ(c1.batch_size, c2.batch_size);
  EXPECT_EQ(c1.hidden_units, c2.hidden_units);
  EXPECT_EQ(r1.test.scores, r2.test.scores);
}

TEST(GridSearch, TestGraphsUntouchedBeforeFinalEvaluation) {
  const auto graphs = separable_graphs(40, 8);
  std::vector<int> labels;
  for (const auto& g : graphs) labels.push_back(*g.label);
  const Split sp = split(labels, SplitSpec{0.8, 0.1, 0.1, 5});
  WatchedSource src(graphs, sp.test);
  grid_search<double>(src, sp, ModelSpec{gnn::Arch::GCN, 2}, GridSpec{{1e-2, 1e-3}, {4}, {2}, 3}, 1);
  EXPECT_EQ(src.early_test_reads, 0);
  EXPECT_EQ(src.final_calls, 1);
  EXPECT_GT(src.reads, 0);
}

TEST(GridSearch, FileSourceLoadsTestGraphsLast) {
  const auto dir = testutil::temp_dir("filesource");
  const auto graphs = separable_graphs(40, 9);
  GraphDataset ds;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto p = dir / ("g" + std::to_string(i) + ".bgr1");
    write_graph(p, graphs[i]);
    ds.entries.push_back({p, *graphs[i].label});
  }
  FileSource<float> src(ds, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 6});
  grid_search<float>(src, sp, ModelSpec{gnn::Arch::FFN, 2}, GridSpec{{1e-2}, {4}, {2}, 2}, 1);
  const auto log = src.load_log();
  ASSERT_EQ(log.size(), 40u);
  const std::size_t before = sp.train.size() + sp.val.size();
  for (std::size_t k = 0; k < log.size(); ++k)
    EXPECT_EQ(std::binary_search(sp.test.begin(), sp.test.end(), log[k]), k >= before);
}

TEST(GridSearch, AllCellsFailingIsAGridError) {
  auto graphs = separable_graphs(40, 10);
  for (auto& g : graphs) g.node_series[0] = std::numeric_limits<float>::infinity();
  InMemorySource<double> src(graphs, false);
  const Split sp = split(src.labels(), SplitSpec{0.8, 0.1, 0.1, 7});
  EXPECT_THROW(grid_search<double>(src, sp, ModelSpec{gnn::Arch::GCN, 2}, GridSpec{{1e-2}, {4}, {2}, 2}, 1),
               GridError);
  EXPECT_THROW(GridSpec{}.check(), GridError);
}
