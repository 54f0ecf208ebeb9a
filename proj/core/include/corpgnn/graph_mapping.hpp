#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "corpgnn/dataset.hpp"
#include "corpgnn/diffcore.hpp"

namespace corpgnn {

/// Symmetric n×n similarity matrix with unit diagonal.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  /// Validates symmetry and forces the diagonal to 1.
  SimilarityMatrix(std::size_t n, std::vector<double> values);

  std::size_t n() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return s_[i * n_ + j]; }
  const std::vector<double>& values() const noexcept { return s_; }

  /// Entry-wise |s|, used by the abs-similarity option.
  SimilarityMatrix absolute() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> s_;
};

struct Edge {
  int i = 0;  // i < j
  int j = 0;
  double weight = 0.0;

  bool operator==(const Edge&) const = default;
};

enum class GraphKind { kTree, kTreePlus };

struct CorpGraph {
  int n = 0;
  std::vector<Edge> edges;
  GraphKind kind = GraphKind::kTree;
  int k_extra = 0;  // requested extra edges for kTreePlus

  bool operator==(const CorpGraph&) const = default;
};

/// Sum of edge weights in (i, j) order.
double total_weight(const CorpGraph& g);
/// Union-find check: n − 1 edges touching every vertex without a cycle.
bool is_spanning_tree(const CorpGraph& g);

/// Last up-to-`window` rows with year ≤ end_year, oldest first.
/// Throws kInsufficientHistory when fewer than 2 such rows exist.
Array2 indicator_vectors(const IndicatorPanel& panel, int end_year, int window);

/// Column-wise cosine similarity. Columns with norm < 1e-12 get similarity 0.
SimilarityMatrix cosine_similarity(const Array2& m);

/// Greedy maximum spanning tree over all pairs sorted by
/// (weight desc, i asc, j asc), cycles rejected via union-find.
CorpGraph max_spanning_tree(const SimilarityMatrix& s);

/// Adds the k highest-weight non-tree pairs (same ordering as the tree).
CorpGraph augment_plus(const SimilarityMatrix& s, const CorpGraph& tree, int k = 10);

enum class GraphFormat { kDot, kEdgeJson };
GraphFormat parse_graph_format(std::string_view name);

/// `names` labels vertices; when its size differs from g.n, vertices are
/// labelled v0, v1, ...
std::string export_graph(const CorpGraph& g, GraphFormat format,
                         const std::vector<std::string>& names = default_schema().names());
CorpGraph parse_edge_json(std::string_view text);

std::string_view graph_kind_name(GraphKind kind);

}  // namespace corpgnn
