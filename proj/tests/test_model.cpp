#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "corpgnn/error.hpp"
#include "corpgnn/gradient_suite.hpp"
#include "corpgnn/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace corpgnn;

namespace {

ModelConfig cfg_for(int w, int classes, std::uint64_t seed = 0) {
  ModelConfig c;
  c.node_in_dim = w;
  c.num_classes = classes;
  c.seed = seed;
  return c;
}

double max_abs_diff(const Array2& a, const Array2& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(InitParams, NamesShapesAndCount) {
  const auto ps = init_params(cfg_for(4, 3));
  const std::vector<std::string> names = {
      "embed.W",      "embed.b",       "sage1.Wself", "sage1.Wneigh", "sage1.b", "sage2.Wself",
      "sage2.Wneigh", "sage2.b",       "sage3.Wself", "sage3.Wneigh", "sage3.b", "pool1.p",
      "pool2.p",      "pool3.p",       "mlp.W1",      "mlp.b1",       "mlp.W2",  "mlp.b2"};
  ASSERT_EQ(ps.entries().size(), names.size());
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(ps.entries()[i].name, names[i]);

  // Shape sum from the layer definitions: embedding (w→32 + bias), three SAGE
  // layers (two 32×32 maps + bias), three 32-vectors, MLP 32→64→C.
  const int w = 4, h = 32, m = 64, c = 3;
  const int expected = (w * h + h) + 3 * (2 * h * h + h) + 3 * h + (h * m + m) + (m * c + c);
  EXPECT_EQ(expected, 8803);
  EXPECT_EQ(static_cast<int>(ps.num_values()), expected);
}

TEST(InitParams, DeterministicGlorotBoundsZeroBias) {
  const auto a = init_params(cfg_for(4, 5, 3));
  const auto b = init_params(cfg_for(4, 5, 3));
  const auto c = init_params(cfg_for(4, 5, 4));
  bool differs = false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto& p = a.entries()[i];
    EXPECT_EQ(p.value, b.entries()[i].value);
    differs = differs || p.value != c.entries()[i].value;
    const bool is_bias = p.name.ends_with(".b") || p.name.ends_with(".b1") || p.name.ends_with(".b2");
    if (is_bias) {
      for (double v : p.value.data()) EXPECT_EQ(v, 0.0);
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    for (double v : p.value.data()) EXPECT_LE(std::abs(v), limit) << p.name;
  }
  EXPECT_TRUE(differs);
}

TEST(Embed, ZeroInputAndWidth) {
  const auto ps = init_params(cfg_for(4, 3));
  const Array2 e = embed_nodes(Array2(5, 4), ps);
  EXPECT_EQ(e.cols(), 32u);
  EXPECT_EQ(e, Array2(5, 32));
  EXPECT_THROW(embed_nodes(Array2(5, 3), ps), Error);
}

TEST(Sage, MatchesNaiveLoopOracle) {
  auto ps = init_params(cfg_for(4, 3, 2));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (double& v : ps.value("sage2.b").data()) v = u(rng);
  Array2 h(5, 32);
  std::normal_distribution<double> n01;
  for (double& v : h.data()) v = n01(rng);
  const EdgeList edges = {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {0, 4}};
  const Array2 got = sage_forward(h, edges, ps, 2);
  const Array2 want = oracle::naive_sage(h, edges, ps.value("sage2.Wself"), ps.value("sage2.Wneigh"), ps.value("sage2.b"));
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Sage, IsolatedNodesAndTwoClique) {
  auto ps = init_params(cfg_for(4, 3, 2));
  Array2 h(3, 32);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (double& v : h.data()) v = n01(rng);
  const Array2 alone = sage_forward(h, {}, ps, 1);
  const Array2 self = relu(add_bias(matmul(h, ps.value("sage1.Wself")), ps.value("sage1.b")));
  EXPECT_LT(max_abs_diff(alone, self), 1e-14);

  Array2 pair(2, 32);
  for (std::size_t k = 0; k < 32; ++k) pair(0, k) = pair(1, k) = n01(rng);
  const Array2 out = sage_forward(pair, {{0, 1}}, ps, 1);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(out(0, k), out(1, k));
}

TEST(TopK, RatioOneKeepsAllWithTanhGate) {
  const auto ps = init_params(cfg_for(4, 3, 1));
  std::mt19937_64 rng(2);
  auto g = fixtures::random_graph(6, 32, 2, rng);
  const auto out = topk_pool(g.x, g.edges, g.graph_of_node, 1, ps, 1, 1.0);
  ASSERT_EQ(out.kept.size(), 6u);
  EXPECT_EQ(out.edges.size(), g.edges.size());
  const Array2& p = ps.value("pool1.p");
  double norm = 0;
  for (double v : p.data()) norm += v * v;
  norm = std::sqrt(norm);
  for (std::size_t v = 0; v < 6; ++v) {
    double s = 0;
    for (std::size_t k = 0; k < 32; ++k) s += g.x(v, k) * p(k, 0);
    s /= norm;
    EXPECT_NEAR(out.scores(v, 0), s, 1e-12);
    for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(out.h(v, k), g.x(v, k) * std::tanh(s), 1e-12);
  }
}

TEST(TopK, KeepsHighestScoresPerGraphAndReindexesEdges) {
  const auto ps = init_params(cfg_for(4, 3, 1));
  std::mt19937_64 rng(3);
  auto a = fixtures::random_graph(10, 32, 3, rng);
  auto b = fixtures::random_graph(7, 32, 1, rng);
  GraphBatch batch = a;
  batch.num_graphs = 2;
  for (std::size_t v = 0; v < 7; ++v) batch.graph_of_node.push_back(1);
  for (auto [x, y] : b.edges) batch.edges.emplace_back(x + 10, y + 10);
  Array2 x(17, 32);
  for (std::size_t v = 0; v < 10; ++v) std::copy(a.x.row(v).begin(), a.x.row(v).end(), x.row(v).begin());
  for (std::size_t v = 0; v < 7; ++v) std::copy(b.x.row(v).begin(), b.x.row(v).end(), x.row(v + 10).begin());

  const auto out = topk_pool(x, batch.edges, batch.graph_of_node, 2, ps, 2, 0.5);
  // ⌈0.5·10⌉ = 5 and ⌈0.5·7⌉ = 4
  int in_first = 0, in_second = 0;
  for (int v : out.kept) (v < 10 ? in_first : in_second)++;
  EXPECT_EQ(in_first, 5);
  EXPECT_EQ(in_second, 4);
  EXPECT_TRUE(std::is_sorted(out.kept.begin(), out.kept.end()));
  for (int v : out.kept) {
    const int g = v < 10 ? 0 : 1;
    int higher = 0;
    for (int u = 0; u < 17; ++u)
      if ((u < 10 ? 0 : 1) == g && out.scores(static_cast<std::size_t>(u), 0) > out.scores(static_cast<std::size_t>(v), 0)) ++higher;
    EXPECT_LT(higher, g == 0 ? 5 : 4);
  }
  for (auto [s, t] : out.edges) {
    ASSERT_LT(static_cast<std::size_t>(std::max(s, t)), out.kept.size());
    const int os = out.kept[static_cast<std::size_t>(s)], ot = out.kept[static_cast<std::size_t>(t)];
    const bool present = std::find(batch.edges.begin(), batch.edges.end(), std::make_pair(std::min(os, ot), std::max(os, ot))) !=
                             batch.edges.end() ||
                         std::find(batch.edges.begin(), batch.edges.end(), std::make_pair(std::max(os, ot), std::min(os, ot))) !=
                             batch.edges.end();
    EXPECT_TRUE(present);
  }
}

TEST(TopK, EqualScoresKeepLowestIds) {
  const auto ps = init_params(cfg_for(4, 3, 1));
  const Array2 h(8, 32, 0.3);
  const std::vector<int> graph(8, 0);
  const auto out = topk_pool(h, {}, graph, 1, ps, 1, 0.5);
  EXPECT_EQ(out.kept, (std::vector<int>{0, 1, 2, 3}));
}

TEST(TopK, ZeroProjection) {
  auto ps = init_params(cfg_for(4, 3, 1));
  ps.value("pool1.p").fill(0.0);
  const std::vector<int> graph(3, 0);
  try {
    topk_pool(Array2(3, 32, 1.0), {}, graph, 1, ps, 1, 0.8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroProjection);
  }
}

TEST(TopK, CascadeOnTwentyNineNodes) {
  int n = 29;
  std::vector<int> counts;
  for (int layer = 0; layer < 3; ++layer) {
    n = pooled_count(n, 0.8);
    counts.push_back(n);
    EXPECT_EQ(n, oracle::int_ceil_ratio(layer == 0 ? 29 : counts[static_cast<std::size_t>(layer - 1)], 4, 5));
  }
  EXPECT_EQ(counts, (std::vector<int>{24, 20, 16}));

  const auto cfg = cfg_for(4, 3, 7);
  const auto ps = init_params(cfg);
  std::mt19937_64 rng(4);
  const auto g = fixtures::random_graph(29, 4, 0, rng);
  const auto fr = model_forward(g, ps, cfg);
  ASSERT_EQ(fr.cache.pool.size(), 3u);
  EXPECT_EQ(fr.cache.pool[0].kept.size(), 24u);
  EXPECT_EQ(fr.cache.pool[1].kept.size(), 20u);
  EXPECT_EQ(fr.cache.pool[2].kept.size(), 16u);
}

TEST(Readout, MatchesNaiveLoopAndBounds) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  Array2 h(9, 5);
  for (double& v : h.data()) v = n01(rng);
  const std::vector<int> graph{0, 2, 0, 2, 2, 0, 3, 3, 0};
  const Array2 r = readout_mean(h, graph, 4);
  EXPECT_LT(max_abs_diff(r, oracle::naive_readout(h, graph, 4)), 1e-15);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(r(1, k), 0.0);
  for (int g : {0, 2, 3}) {
    for (std::size_t k = 0; k < 5; ++k) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t v = 0; v < 9; ++v)
        if (graph[v] == g) {
          lo = std::min(lo, h(v, k));
          hi = std::max(hi, h(v, k));
        }
      EXPECT_GE(r(static_cast<std::size_t>(g), k), lo - 1e-15);
      EXPECT_LE(r(static_cast<std::size_t>(g), k), hi + 1e-15);
    }
  }
  const std::vector<int> single{0};
  const Array2 one = readout_mean(Array2{{1, 2, 3}}, single, 1);
  EXPECT_EQ(one, (Array2{{1, 2, 3}}));
}

TEST(Model, ShapeAndPrediction) {
  const auto cfg = cfg_for(4, 3, 1);
  const auto ps = init_params(cfg);
  std::mt19937_64 rng(1);
  const auto g = fixtures::random_graph(29, 4, 3, rng);
  const auto fr = model_forward(g, ps, cfg);
  EXPECT_EQ(fr.logits.rows(), 1u);
  EXPECT_EQ(fr.logits.cols(), 3u);
  const auto pred = predict(g, ps, cfg);
  double sum = 0;
  for (std::size_t c = 0; c < 3; ++c) sum += pred.probs(0, c);
  EXPECT_NEAR(sum, 1.0, 1e-9);
  const auto best = std::max_element(fr.logits.row(0).begin(), fr.logits.row(0).end());
  EXPECT_EQ(pred.classes[0], static_cast<int>(best - fr.logits.row(0).begin()));
}

TEST(Model, ZeroWeightsGiveZeroLogitsAndLogCLoss) {
  // Pooling projections stay nonzero: a zero projection has no direction to
  // score along and is rejected.
  for (int classes : {3, 5, 8}) {
    const auto cfg = cfg_for(4, classes, 2);
    auto ps = init_params(cfg);
    for (auto& p : ps.entries())
      if (!p.name.starts_with("pool")) p.value.fill(0.0);
    std::mt19937_64 rng(3);
    auto g = fixtures::random_graph(29, 4, 5, rng, classes - 1);
    const auto fr = model_forward(g, ps, cfg);
    for (double v : fr.logits.data()) EXPECT_EQ(v, 0.0);
    EXPECT_NEAR(loss_only(g, ps, cfg), std::log(static_cast<double>(classes)), 1e-15);
    EXPECT_EQ(predict(g, ps, cfg).classes[0], 0);  // uniform → lowest class id
  }
}

TEST(Model, PermutationInvariance) {
  const auto cfg = cfg_for(4, 5, 9);
  const auto ps = init_params(cfg);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = fixtures::random_graph(29, 4, trial, rng);
    const auto perm = fixtures::random_permutation(29, rng);
    const auto a = model_forward(g, ps, cfg).logits;
    const auto b = model_forward(fixtures::permute_nodes(g, perm), ps, cfg).logits;
    EXPECT_LT(max_abs_diff(a, b), 1e-9);
  }
}

TEST(Model, GradientCheckOnTwoGraphBatch) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto e = check_model_gradient(seed, 1e-5, 1e-4);
    EXPECT_TRUE(e.finite);
    EXPECT_LT(e.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Model, EmbedGradientCheck) {
  auto ps = init_params(cfg_for(4, 3, 5));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (double& v : ps.value("embed.b").data()) v = u(rng);
  Array2 x(6, 4), r(6, 32);
  std::uniform_real_distribution<double> d(-2, 2);
  for (double& v : x.data()) v = d(rng);
  for (double& v : r.data()) v = d(rng);
  ParameterStore sub;
  sub.add("embed.W", ps.value("embed.W"));
  sub.add("embed.b", ps.value("embed.b"));
  auto f = [&](ParameterStore& p, bool want) {
    const Array2 pre = add_bias(matmul(x, p.value("embed.W")), p.value("embed.b"));
    const Array2 out = embed_nodes(x, p);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * r.data()[i];
    if (want) {
      const Array2 dpre = relu_backward(pre, r);
      p.grad("embed.W") = matmul_backward(x, p.value("embed.W"), dpre).db;
      p.grad("embed.b") = add_bias_backward(dpre);
    }
    return s;
  };
  EXPECT_LT(grad_check(sub, f).max_rel_error, 1e-4);
}

TEST(Batch, ValidateRejectsCrossGraphEdges) {
  GraphBatch b;
  b.x = Array2(4, 4);
  b.graph_of_node = {0, 0, 1, 1};
  b.num_graphs = 2;
  b.edges = {{1, 2}};
  EXPECT_THROW(b.validate(), Error);
  b.edges = {{0, 1}, {2, 3}};
  EXPECT_NO_THROW(b.validate());
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  const auto cfg = cfg_for(6, 8, 42);
  const auto back = ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  auto bad = cfg;
  bad.num_classes = 4;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(GradientPoint, KinkMarginMatchesCacheScan) {
  const auto cfg = cfg_for(4, 3, 3);
  const auto ps = init_params(cfg);
  const auto batch = random_two_graph_batch(5, 4, 3);
  const auto c = model_forward(batch, ps, cfg).cache;
  double relu_min = 1e300;
  for (const Array2* a : {&c.embed_pre, &c.sage[0].pre, &c.sage[1].pre, &c.sage[2].pre, &c.mlp_pre})
    for (double v : a->data()) relu_min = std::min(relu_min, std::abs(v));
  const double m = kink_margin(c);
  EXPECT_LE(m, relu_min);
  EXPECT_GE(m, 0.0);
}

TEST(GradientPoint, ModelChecksUseSmoothPoints) {
  for (std::uint64_t seed : {3u, 7u, 14u}) {
    const auto e = check_model_gradient(seed, 1e-5, 1e-4);
    EXPECT_LE(e.redraws, kMaxKinkRedraws);
    EXPECT_LT(e.max_rel_error, 1e-6) << "seed " << seed << " after " << e.redraws << " redraws";
  }
}
