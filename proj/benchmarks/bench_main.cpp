#include <benchmark/benchmark.h>

#include <random>

#include "corpgnn/graph_mapping.hpp"
#include "corpgnn/metrics.hpp"
#include "corpgnn/model.hpp"
#include "corpgnn/pipeline.hpp"

using namespace corpgnn;

namespace {

Array2 random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Array2 a(rows, cols);
  for (double& v : a.data()) v = n01(rng);
  return a;
}

// Block-diagonal batch of `graphs` Corp_Tree samples built from random windows.
GraphBatch random_batch(int graphs, std::uint64_t seed) {
  MappingConfig m;
  GraphBatch b;
  b.num_graphs = graphs;
  b.x = Array2(static_cast<std::size_t>(29 * graphs), 4);
  for (int g = 0; g < graphs; ++g) {
    const Array2 rows = random_rows(4, 29, seed + static_cast<std::uint64_t>(g));
    const CorpGraph tree = build_graph(rows, m);
    const int base = 29 * g;
    for (const auto& e : tree.edges) b.edges.emplace_back(base + e.i, base + e.j);
    for (std::size_t k = 0; k < 29; ++k) {
      for (std::size_t t = 0; t < 4; ++t) b.x(static_cast<std::size_t>(base) + k, t) = rows(t, k);
      b.graph_of_node.push_back(g);
    }
    b.labels.push_back(g % 3);
  }
  return b;
}

}  // namespace

static void BM_CosineSimilarity(benchmark::State& state) {
  const Array2 rows = random_rows(static_cast<std::size_t>(state.range(0)), 29, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity(rows));
}
BENCHMARK(BM_CosineSimilarity)->Arg(4)->Arg(64);

static void BM_MaxSpanningTree(benchmark::State& state) {
  const SimilarityMatrix s = cosine_similarity(random_rows(4, 29, 2));
  for (auto _ : state) benchmark::DoNotOptimize(max_spanning_tree(s));
}
BENCHMARK(BM_MaxSpanningTree);

static void BM_TreePlus(benchmark::State& state) {
  const SimilarityMatrix s = cosine_similarity(random_rows(4, 29, 3));
  const CorpGraph tree = max_spanning_tree(s);
  for (auto _ : state) benchmark::DoNotOptimize(augment_plus(s, tree, 10));
}
BENCHMARK(BM_TreePlus);

static void BM_ModelForward(benchmark::State& state) {
  const ModelConfig cfg;
  const ParameterStore ps = init_params(cfg);
  const GraphBatch batch = random_batch(static_cast<int>(state.range(0)), 10);
  for (auto _ : state) benchmark::DoNotOptimize(model_forward(batch, ps, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(32);

static void BM_ModelForwardBackward(benchmark::State& state) {
  const ModelConfig cfg;
  ParameterStore ps = init_params(cfg);
  const GraphBatch batch = random_batch(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) {
    ps.zero_grad();
    benchmark::DoNotOptimize(loss_and_grad(batch, ps, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForwardBackward)->Arg(32);

static void BM_BinaryRoc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    pos[i] = u(rng) < 0.3;
  }
  pos[0] = 1;
  pos[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(binary_roc(scores, pos));
}
BENCHMARK(BM_BinaryRoc)->Arg(1000)->Arg(100000);
BENCHMARK_MAIN();
