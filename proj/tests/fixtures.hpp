#pragma once

// Random graph batches for model tests.

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "corpgnn/model.hpp"

namespace fixtures {

using corpgnn::Array2;
using corpgnn::EdgeList;
using corpgnn::GraphBatch;

// One graph: random spanning tree plus `extra` random chords, features ~ N(0,1).
inline GraphBatch random_graph(int n, int dim, int extra, std::mt19937_64& rng, int label = 0) {
  GraphBatch b;
  b.num_graphs = 1;
  b.graph_of_node.assign(static_cast<std::size_t>(n), 0);
  b.labels = {label};
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> parent(0, v - 1);
    b.edges.emplace_back(parent(rng), v);
  }
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int k = 0; k < extra; ++k) {
    const int a = any(rng), c = any(rng);
    if (a == c) continue;
    const auto e = std::make_pair(std::min(a, c), std::max(a, c));
    if (std::find(b.edges.begin(), b.edges.end(), e) == b.edges.end()) b.edges.push_back(e);
  }
  std::normal_distribution<double> n01;
  b.x = Array2(static_cast<std::size_t>(n), static_cast<std::size_t>(dim));
  for (double& v : b.x.data()) v = n01(rng);
  return b;
}

// Relabels node v as perm[v], carrying features and edges along.
inline GraphBatch permute_nodes(const GraphBatch& g, const std::vector<int>& perm) {
  GraphBatch out = g;
  for (std::size_t v = 0; v < perm.size(); ++v) {
    auto src = g.x.row(v);
    std::copy(src.begin(), src.end(), out.x.row(static_cast<std::size_t>(perm[v])).begin());
    out.graph_of_node[static_cast<std::size_t>(perm[v])] = g.graph_of_node[v];
  }
  out.edges.clear();
  for (auto [a, b] : g.edges) out.edges.emplace_back(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
  return out;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace fixtures
