#pragma once

// Graph classifier: node embedding, stacked mean-aggregator GraphSAGE layers
// each followed by top-k pooling and a mean readout, the average of the
// readouts, then a two-layer MLP head producing class logits.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpgnn/diffcore.hpp"

namespace corpgnn {

struct ModelConfig {
  int node_in_dim = 4;  // lookback window length
  int hidden_dim = 32;
  int sage_layers = 3;
  double pool_ratio = 0.8;
  int mlp_hidden = 64;
  int num_classes = 3;
  std::uint64_t seed = 0;
  bool l2_normalize = false;  // L2-normalize GraphSAGE outputs

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::ordered_json& j);
};

using EdgeList = std::vector<std::pair<int, int>>;

/// Block-diagonal batch of graphs; node ids are global within the batch.
struct GraphBatch {
  Array2 x;
  EdgeList edges;
  std::vector<int> graph_of_node;
  int num_graphs = 0;
  std::vector<int> labels;  // one per graph; may be empty for inference

  std::size_t num_nodes() const noexcept { return graph_of_node.size(); }
  /// Throws kBadGraph if an invariant is violated.
  void validate() const;
};

ParameterStore init_params(const ModelConfig& cfg);

// ---- layer forwards (standalone, used by tests and by model_forward) ------

Array2 embed_nodes(const Array2& x, const ParameterStore& params);

/// h'_v = ReLU(h_v·Wself + mean_{u∈N(v)} h_u·Wneigh + b); layer is 1-based.
Array2 sage_forward(const Array2& h, const EdgeList& edges, const ParameterStore& params, int layer,
                    bool l2_normalize = false);

struct PoolOutput {
  Array2 h;
  EdgeList edges;
  std::vector<int> graph_of_node;
  std::vector<int> kept;  // ascending ids into the input node set
  Array2 scores;          // N×1 normalized projection of every input node
};

/// Keeps ⌈ratio·n_g⌉ highest-score nodes per graph (ties → lower id) and
/// gates them by tanh(score).
PoolOutput topk_pool(const Array2& h, const EdgeList& edges, std::span<const int> graph_of_node,
                     int num_graphs, const ParameterStore& params, int layer, double ratio);

/// Per-graph mean of node rows; graphs without nodes give a zero row.
Array2 readout_mean(const Array2& h, std::span<const int> graph_of_node, int num_graphs);

/// ⌈ratio·n⌉ with a small guard against rounding up exact products.
int pooled_count(int n, double ratio);

// ---- full model ----------------------------------------------------------------

struct SageCache {
  Array2 input;
  std::vector<int> src;
  std::vector<int> dst;
  Array2 neigh_mean;
  Array2 pre;
  Array2 act;
  Array2 out;  // equals act unless l2_normalize
};

struct PoolCache {
  Array2 scores;
  std::vector<int> kept;
  Array2 kept_h;
  Array2 gate;
  Array2 out;
  std::vector<int> graph_of_node;
  EdgeList edges;
};

struct ForwardCache {
  Array2 x;
  Array2 embed_pre;
  Array2 embed_out;
  std::vector<SageCache> sage;
  std::vector<PoolCache> pool;
  std::vector<Array2> readouts;
  Array2 graph_embedding;
  Array2 mlp_pre;
  Array2 mlp_hidden;
  int num_graphs = 0;
  std::vector<int> input_graph_of_node;
};

struct ForwardResult {
  Array2 logits;
  ForwardCache cache;
};

ForwardResult model_forward(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg);

/// Accumulates parameter gradients for upstream gradient `dlogits`.
void model_backward(const ForwardCache& cache, const Array2& dlogits, ParameterStore& params,
                    const ModelConfig& cfg);

/// Forward + cross-entropy + backward. Gradients are zeroed first.
/// `class_weights`, when non-empty, weights each sample by its class.
double loss_and_grad(const GraphBatch& batch, ParameterStore& params, const ModelConfig& cfg,
                     std::span<const double> class_weights = {});
double loss_only(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg,
                 std::span<const double> class_weights = {});

struct Prediction {
  std::vector<int> classes;
  Array2 probs;
  Array2 logits;
};

/// argmax of softmax rows; ties go to the lowest class id.
Prediction predict(const GraphBatch& batch, const ParameterStore& params, const ModelConfig& cfg);

}  // namespace corpgnn
