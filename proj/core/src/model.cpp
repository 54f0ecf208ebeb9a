#include "corpgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "corpgnn/dataset.hpp"
#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

std::string sage_name(int layer, const char* what) {
  return "sage" + std::to_string(layer) + "." + what;
}

std::string pool_name(int layer) { return "pool" + std::to_string(layer) + ".p"; }

Array2 glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Array2 w(fan_in, fan_out);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

void directed_lists(const EdgeList& edges, std::vector<int>& src, std::vector<int>& dst) {
  src.clear();
  dst.clear();
  src.reserve(edges.size() * 2);
  dst.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    src.push_back(a);
    dst.push_back(b);
    src.push_back(b);
    dst.push_back(a);
  }
}

void sage_forward_cached(SageCache& c, const ParameterStore& params, int layer, bool l2) {
  const std::size_t n = c.input.rows();
  const Array2 gathered = gather_rows(c.input, c.src);
  c.neigh_mean = segment_mean(gathered, c.dst, n);
  Array2 pre = matmul(c.input, params.value(sage_name(layer, "Wself")));
  pre += matmul(c.neigh_mean, params.value(sage_name(layer, "Wneigh")));
  c.pre = add_bias(pre, params.value(sage_name(layer, "b")));
  c.act = relu(c.pre);
  c.out = l2 ? l2_normalize_rows(c.act) : c.act;
}

std::vector<int> select_topk(const Array2& scores, std::span<const int> graph_of_node, int num_graphs,
                             double ratio) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(num_graphs));
  for (std::size_t v = 0; v < graph_of_node.size(); ++v)
    members[static_cast<std::size_t>(graph_of_node[v])].push_back(static_cast<int>(v));
  std::vector<int> kept;
  for (auto& nodes : members) {
    const int keep = pooled_count(static_cast<int>(nodes.size()), ratio);
    std::sort(nodes.begin(), nodes.end(), [&](int a, int b) {
      const double sa = scores(static_cast<std::size_t>(a), 0);
      const double sb = scores(static_cast<std::size_t>(b), 0);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    kept.insert(kept.end(), nodes.begin(), nodes.begin() + keep);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

EdgeList restrict_edges(const EdgeList& edges, const std::vector<int>& kept, std::size_t n_old) {
  std::vector<int> remap(n_old, -1);
  for (std::size_t k = 0; k < kept.size(); ++k) remap[static_cast<std::size_t>(kept[k])] = static_cast<int>(k);
  EdgeList out;
  for (const auto& [a, b] : edges) {
    const int na = remap[static_cast<std::size_t>(a)];
    const int nb = remap[static_cast<std::size_t>(b)];
    if (na >= 0 && nb >= 0) out.emplace_back(na, nb);
  }
  return out;
}

void pool_forward_cached(PoolCache& c, const Array2& h, const EdgeList& edges,
                         std::span<const int> graph_of_node, int num_graphs,
                         const ParameterStore& params, int layer, double ratio) {
  c.scores = normalized_projection(h, params.value(pool_name(layer)));
  c.kept = select_topk(c.scores, graph_of_node, num_graphs, ratio);
  c.kept_h = gather_rows(h, c.kept);
  c.gate = tanh_op(gather_rows(c.scores, c.kept));
  c.out = scale_rows(c.kept_h, c.gate);
  c.graph_of_node.clear();
  c.graph_of_node.reserve(c.kept.size());
  for (int v : c.kept) c.graph_of_node.push_back(graph_of_node[static_cast<std::size_t>(v)]);
  c.edges = restrict_edges(edges, c.kept, h.rows());
}

}  // namespace

// ---- config / batch ------------------------------------------------------------

void ModelConfig::validate() const {
  if (node_in_dim < 1) throw Error(ErrorCode::kInvalidArgument, "node_in_dim must be >= 1");
  if (hidden_dim < 1 || mlp_hidden < 1) throw Error(ErrorCode::kInvalidArgument, "layer widths must be >= 1");
  if (sage_layers < 1) throw Error(ErrorCode::kInvalidArgument, "sage_layers must be >= 1");
  if (!(pool_ratio > 0.0 && pool_ratio <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pool_ratio must be in (0, 1]");
  }
  if (pool_ratio * 29.0 < 1.0) throw Error(ErrorCode::kInvalidArgument, "pool_ratio * 29 must be >= 1");
  if (!is_supported_class_count(num_classes)) throw Error(ErrorCode::kInvalidArgument, "num_classes must be 3, 5 or 8");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["node_in_dim"] = node_in_dim;
  j["hidden_dim"] = hidden_dim;
  j["sage_layers"] = sage_layers;
  j["pool_ratio"] = pool_ratio;
  j["mlp_hidden"] = mlp_hidden;
  j["num_classes"] = num_classes;
  j["seed"] = seed;
  j["l2_normalize"] = l2_normalize;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.node_in_dim = j.at("node_in_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.sage_layers = j.at("sage_layers").get<int>();
  c.pool_ratio = j.at("pool_ratio").get<double>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.l2_normalize = j.value("l2_normalize", false);
  c.validate();
  return c;
}

void GraphBatch::validate() const {
  if (x.rows() != graph_of_node.size()) throw Error(ErrorCode::kBadGraph, "feature rows != node count");
  std::vector<int> count(static_cast<std::size_t>(std::max(num_graphs, 0)), 0);
  for (int g : graph_of_node) {
    if (g < 0 || g >= num_graphs) throw Error(ErrorCode::kBadGraph, "graph id out of range");
    ++count[static_cast<std::size_t>(g)];
  }
  for (int c : count)
    if (c == 0) throw Error(ErrorCode::kBadGraph, "graph without nodes");
  const int n = static_cast<int>(num_nodes());
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw Error(ErrorCode::kBadGraph, "edge endpoint");
    if (graph_of_node[static_cast<std::size_t>(a)] != graph_of_node[static_cast<std::size_t>(b)]) {
      throw Error(ErrorCode::kBadGraph, "edge crosses graphs");
    }
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != num_graphs) {
    throw Error(ErrorCode::kBadGraph, "label count != graph count");
  }
}

int pooled_count(int n, double ratio) {
  if (n <= 0) return 0;
  const int k = static_cast<int>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  return std::clamp(k, 1, n);
}

ParameterStore init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto in = static_cast<std::size_t>(cfg.node_in_dim);
  const auto hid = static_cast<std::size_t>(cfg.hidden_dim);
  const auto mlp = static_cast<std::size_t>(cfg.mlp_hidden);
  const auto cls = static_cast<std::size_t>(cfg.num_classes);

  ParameterStore p;
  p.add("embed.W", glorot(in, hid, rng));
  p.add("embed.b", Array2(1, hid));
  for (int l = 1; l <= cfg.sage_layers; ++l) {
    p.add(sage_name(l, "Wself"), glorot(hid, hid, rng));
    p.add(sage_name(l, "Wneigh"), glorot(hid, hid, rng));
    p.add(sage_name(l, "b"), Array2(1, hid));
  }
  for (int l = 1; l <= cfg.sage_layers; ++l) p.add(pool_name(l), glorot(hid, 1, rng));
  p.add("mlp.W1", glorot(hid, mlp, rng));
  p.add("mlp.b1", Array2(1, mlp));
  p.add("mlp.W2", glorot(mlp, cls, rng));
  p.add("mlp.b2", Array2(1, cls));
  return p;
}

// ---- standalone layers -------------------------------------------------------------

Array2 embed_nodes(const Array2& x, const ParameterStore& params) {
  return relu(add_bias(matmul(x, params.value("embed.W")), params.value("embed.b")));
}

Array2 sage_forward(const Array2& h, const EdgeList& edges, const ParameterStore& params, int layer,
                    bool l2_normalize) {
  SageCache c;
  c.input = h;
  directed_lists(edges, c.src, c.dst);
  sage_forward_cached(c, params, layer, l2_normalize);
  return c.out;
}

PoolOutput topk_pool(const Array2& h, const EdgeList& edges, std::span<const int> graph_of_node,
                     int num_graphs, const ParameterStore& params, int layer, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "ratio must be in (0, 1]");
  PoolCache c;
  pool_forward_cached(c, h, edges, graph_of_node, num_graphs, params, layer, ratio);
  return PoolOutput{std::move(c.out), std::move(c.edges), std::move(c.graph_of_node),
                    std::move(c.kept), std::move(c.scores)};
}

Array2 readout_mean(const Array2& h, std::span<const int> graph_of_node, int num_graphs) {
  return segment_mean(h, graph_of_node, static_cast<std::size_t>(num_graphs));
}

// ---- full model ------------------------------------------------------------------

ForwardResult model_forward(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg) {
  if (batch.x.cols() != static_cast<std::size_t>(cfg.node_in_dim)) {
    throw Error(ErrorCode::kShapeMismatch, "node feature width " + std::to_string(batch.x.cols()) +
                                               " != node_in_dim " + std::to_string(cfg.node_in_dim));
  }
  batch.validate();
  ForwardResult res;
  ForwardCache& c = res.cache;
  c.num_graphs = batch.num_graphs;
  c.input_graph_of_node = batch.graph_of_node;
  c.x = batch.x;
  c.embed_pre = add_bias(matmul(batch.x, params.value("embed.W")), params.value("embed.b"));
  c.embed_out = relu(c.embed_pre);

  const Array2* h = &c.embed_out;
  const EdgeList* edges = &batch.edges;
  const std::vector<int>* gon = &batch.graph_of_node;
  c.sage.resize(static_cast<std::size_t>(cfg.sage_layers));
  c.pool.resize(static_cast<std::size_t>(cfg.sage_layers));
  for (int l = 1; l <= cfg.sage_layers; ++l) {
    auto& sc = c.sage[static_cast<std::size_t>(l - 1)];
    sc.input = *h;
    directed_lists(*edges, sc.src, sc.dst);
    sage_forward_cached(sc, params, l, cfg.l2_normalize);

    auto& pc = c.pool[static_cast<std::size_t>(l - 1)];
    pool_forward_cached(pc, sc.out, *edges, *gon, batch.num_graphs, params, l, cfg.pool_ratio);
    c.readouts.push_back(readout_mean(pc.out, pc.graph_of_node, batch.num_graphs));

    h = &pc.out;
    edges = &pc.edges;
    gon = &pc.graph_of_node;
  }

  c.graph_embedding = Array2(static_cast<std::size_t>(batch.num_graphs), static_cast<std::size_t>(cfg.hidden_dim));
  for (const auto& r : c.readouts) c.graph_embedding += r;
  c.graph_embedding *= 1.0 / static_cast<double>(cfg.sage_layers);

  c.mlp_pre = add_bias(matmul(c.graph_embedding, params.value("mlp.W1")), params.value("mlp.b1"));
  c.mlp_hidden = relu(c.mlp_pre);
  res.logits = add_bias(matmul(c.mlp_hidden, params.value("mlp.W2")), params.value("mlp.b2"));
  return res;
}

void model_backward(const ForwardCache& c, const Array2& dlogits, ParameterStore& params,
                    const ModelConfig& cfg) {
  // Head.
  auto g2 = matmul_backward(c.mlp_hidden, params.value("mlp.W2"), dlogits);
  params.grad("mlp.W2") += g2.db;
  params.grad("mlp.b2") += add_bias_backward(dlogits);
  const Array2 d_pre1 = relu_backward(c.mlp_pre, g2.da);
  auto g1 = matmul_backward(c.graph_embedding, params.value("mlp.W1"), d_pre1);
  params.grad("mlp.W1") += g1.db;
  params.grad("mlp.b1") += add_bias_backward(d_pre1);

  Array2 d_readout = g1.da;
  d_readout *= 1.0 / static_cast<double>(cfg.sage_layers);

  // Layers in reverse; d_next is the gradient flowing into pool output ℓ
  // from sage layer ℓ+1.
  Array2 d_next;
  for (int l = cfg.sage_layers; l >= 1; --l) {
    const auto& sc = c.sage[static_cast<std::size_t>(l - 1)];
    const auto& pc = c.pool[static_cast<std::size_t>(l - 1)];

    Array2 d_pool_out = segment_mean_backward(d_readout, pc.graph_of_node, pc.out.rows());
    if (!d_next.empty()) d_pool_out += d_next;

    // Pool: out = kept_h ⊙ tanh(score[kept]).
    auto gs = scale_rows_backward(pc.kept_h, pc.gate, d_pool_out);
    const Array2 d_kept_score = tanh_backward(pc.gate, gs.dg);
    const std::size_t n_in = sc.out.rows();
    Array2 d_scores = gather_rows_backward(d_kept_score, pc.kept, n_in);
    Array2 d_sage_out = gather_rows_backward(gs.dx, pc.kept, n_in);
    auto gp = normalized_projection_backward(sc.out, params.value(pool_name(l)), d_scores);
    params.grad(pool_name(l)) += gp.dp;
    d_sage_out += gp.dx;

    // SAGE.
    Array2 d_act = cfg.l2_normalize ? l2_normalize_rows_backward(sc.act, sc.out, d_sage_out)
                                    : std::move(d_sage_out);
    const Array2 d_pre = relu_backward(sc.pre, d_act);
    params.grad(sage_name(l, "b")) += add_bias_backward(d_pre);
    auto gself = matmul_backward(sc.input, params.value(sage_name(l, "Wself")), d_pre);
    params.grad(sage_name(l, "Wself")) += gself.db;
    auto gneigh = matmul_backward(sc.neigh_mean, params.value(sage_name(l, "Wneigh")), d_pre);
    params.grad(sage_name(l, "Wneigh")) += gneigh.db;
    const Array2 d_gathered = segment_mean_backward(gneigh.da, sc.dst, sc.src.size());
    Array2 d_input = std::move(gself.da);
    d_input += gather_rows_backward(d_gathered, sc.src, sc.input.rows());
    d_next = std::move(d_input);
  }

  // Embedding.
  const Array2 d_embed_pre = relu_backward(c.embed_pre, d_next);
  auto ge = matmul_backward(c.x, params.value("embed.W"), d_embed_pre);
  params.grad("embed.W") += ge.db;
  params.grad("embed.b") += add_bias_backward(d_embed_pre);
}

namespace {

std::vector<double> sample_weights_for(const GraphBatch& batch, std::span<const double> class_weights) {
  std::vector<double> w;
  if (class_weights.empty()) return w;
  w.reserve(batch.labels.size());
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_weights.size()) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    }
    w.push_back(class_weights[static_cast<std::size_t>(y)]);
  }
  return w;
}

}  // namespace

double loss_and_grad(const GraphBatch& batch, ParameterStore& params, const ModelConfig& cfg,
                     std::span<const double> class_weights) {
  params.zero_grad();
  auto fwd = model_forward(batch, params, cfg);
  const auto weights = sample_weights_for(batch, class_weights);
  auto sx = softmax_xent(fwd.logits, batch.labels, weights);
  const Array2 dlogits = softmax_xent_backward(sx.probs, batch.labels, weights);
  model_backward(fwd.cache, dlogits, params, cfg);
  return sx.loss;
}

double loss_only(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg,
                 std::span<const double> class_weights) {
  auto fwd = model_forward(batch, params, cfg);
  const auto weights = sample_weights_for(batch, class_weights);
  return softmax_xent(fwd.logits, batch.labels, weights).loss;
}

Prediction predict(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg) {
  Prediction p;
  p.logits = model_forward(batch, params, cfg).logits;
  p.probs = softmax_rows(p.logits);
  p.classes.reserve(p.probs.rows());
  for (std::size_t r = 0; r < p.probs.rows(); ++r) {
    auto row = p.probs.row(r);
    p.classes.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return p;
}

}  // namespace corpgnn
