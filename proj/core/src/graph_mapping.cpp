#include "corpgnn/graph_mapping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

bool edge_order(const Edge& a, const Edge& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  if (a.i != b.i) return a.i < b.i;
  return a.j < b.j;
}

bool pair_order(const Edge& a, const Edge& b) {
  return a.i != b.i ? a.i < b.i : a.j < b.j;
}

std::vector<Edge> sorted_pairs(const SimilarityMatrix& s) {
  const int n = static_cast<int>(s.n());
  std::vector<Edge> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      pairs.push_back({i, j, s(static_cast<std::size_t>(i), static_cast<std::size_t>(j))});
  std::sort(pairs.begin(), pairs.end(), edge_order);
  return pairs;
}

std::string vertex_name(const std::vector<std::string>& names, int n, int v) {
  if (static_cast<int>(names.size()) == n) return names[static_cast<std::size_t>(v)];
  return "v" + std::to_string(v);
}

}  // namespace

// ---- SimilarityMatrix -----------------------------------------------------------

SimilarityMatrix::SimilarityMatrix(std::size_t n, std::vector<double> values)
    : n_(n), s_(std::move(values)) {
  if (s_.size() != n_ * n_) throw Error(ErrorCode::kShapeMismatch, "similarity matrix size");
  for (std::size_t i = 0; i < n_; ++i) {
    s_[i * n_ + i] = 1.0;
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (s_[i * n_ + j] != s_[j * n_ + i]) {
        throw Error(ErrorCode::kInvalidArgument, "similarity matrix is not symmetric");
      }
      if (!std::isfinite(s_[i * n_ + j])) {
        throw Error(ErrorCode::kNonFinite, "similarity matrix entry");
      }
    }
  }
}

SimilarityMatrix SimilarityMatrix::absolute() const {
  std::vector<double> v = s_;
  for (double& x : v) x = std::abs(x);
  return SimilarityMatrix(n_, std::move(v));
}

// ---- graph helpers --------------------------------------------------------------

double total_weight(const CorpGraph& g) {
  std::vector<Edge> e = g.edges;
  std::sort(e.begin(), e.end(), pair_order);
  double w = 0.0;
  for (const auto& x : e) w += x.weight;
  return w;
}

bool is_spanning_tree(const CorpGraph& g) {
  if (g.n < 1 || static_cast<int>(g.edges.size()) != g.n - 1) return false;
  DisjointSet ds(static_cast<std::size_t>(g.n));
  for (const auto& e : g.edges) {
    if (e.i < 0 || e.j >= g.n || e.i >= e.j) return false;
    if (!ds.unite(static_cast<std::size_t>(e.i), static_cast<std::size_t>(e.j))) return false;
  }
  return true;  // n − 1 acyclic edges on n vertices are connected
}

std::string_view graph_kind_name(GraphKind kind) {
  return kind == GraphKind::kTree ? "tree" : "tree-plus";
}

// ---- operations -----------------------------------------------------------------

Array2 indicator_vectors(const IndicatorPanel& panel, int end_year, int window) {
  if (window < 2) throw Error(ErrorCode::kInvalidArgument, "window must be >= 2");
  const auto upto = std::upper_bound(panel.years.begin(), panel.years.end(), end_year);
  const auto available = static_cast<std::size_t>(upto - panel.years.begin());
  if (available < 2) {
    throw Error(ErrorCode::kInsufficientHistory,
                panel.enterprise_id + " has " + std::to_string(available) + " row(s) up to " +
                    std::to_string(end_year));
  }
  const std::size_t w = std::min<std::size_t>(available, static_cast<std::size_t>(window));
  const std::size_t first = available - w;
  Array2 out(w, panel.values.cols());
  for (std::size_t r = 0; r < w; ++r) {
    auto src = panel.values.row(first + r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

SimilarityMatrix cosine_similarity(const Array2& m) {
  const std::size_t n = m.cols();
  std::vector<double> norms(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) sq += m(r, c) * m(r, c);
    norms[c] = std::sqrt(sq);
  }
  std::vector<double> s(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = 0.0;
      if (norms[i] >= 1e-12 && norms[j] >= 1e-12) {
        double dot = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) dot += m(r, i) * m(r, j);
        v = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      }
      s[i * n + j] = v;
      s[j * n + i] = v;
    }
  }
  return SimilarityMatrix(n, std::move(s));
}

CorpGraph max_spanning_tree(const SimilarityMatrix& s) {
  if (s.n() < 2) throw Error(ErrorCode::kInvalidArgument, "spanning tree needs n >= 2");
  CorpGraph g;
  g.n = static_cast<int>(s.n());
  g.kind = GraphKind::kTree;
  DisjointSet ds(s.n());
  for (const auto& e : sorted_pairs(s)) {
    if (ds.unite(static_cast<std::size_t>(e.i), static_cast<std::size_t>(e.j))) {
      g.edges.push_back(e);
      if (static_cast<int>(g.edges.size()) == g.n - 1) break;
    }
  }
  return g;
}

CorpGraph augment_plus(const SimilarityMatrix& s, const CorpGraph& tree, int k) {
  if (tree.n != static_cast<int>(s.n()) || !is_spanning_tree(tree)) {
    throw Error(ErrorCode::kBadGraph, "augment_plus needs a spanning tree over the same vertices");
  }
  if (k < 0) throw Error(ErrorCode::kInvalidArgument, "plus-k must be >= 0");
  CorpGraph g = tree;
  g.kind = GraphKind::kTreePlus;
  g.k_extra = k;
  std::set<std::pair<int, int>> present;
  for (const auto& e : tree.edges) present.emplace(e.i, e.j);
  int added = 0;
  for (const auto& e : sorted_pairs(s)) {
    if (added >= k) break;
    if (present.count({e.i, e.j})) continue;
    g.edges.push_back(e);
    ++added;
  }
  return g;
}

// ---- export ------------------------------------------------------------------------

GraphFormat parse_graph_format(std::string_view name) {
  if (name == "dot") return GraphFormat::kDot;
  if (name == "edge-json" || name == "json") return GraphFormat::kEdgeJson;
  throw Error(ErrorCode::kUnknownFormat, std::string(name));
}

std::string export_graph(const CorpGraph& g, GraphFormat format, const std::vector<std::string>& names) {
  if (format == GraphFormat::kDot) {
    std::ostringstream os;
    os << "graph " << (g.kind == GraphKind::kTree ? "corp_tree" : "corp_tree_plus") << " {\n";
    for (const auto& e : g.edges) {
      const std::string w = format_double(e.weight);
      os << "  \"" << vertex_name(names, g.n, e.i) << "\" -- \"" << vertex_name(names, g.n, e.j)
         << "\" [weight=" << w << ", label=\"" << w << "\"];\n";
    }
    os << "}\n";
    return os.str();
  }
  nlohmann::ordered_json j;
  j["kind"] = graph_kind_name(g.kind);
  j["k_extra"] = g.k_extra;
  j["n"] = g.n;
  std::vector<std::string> vs;
  for (int v = 0; v < g.n; ++v) vs.push_back(vertex_name(names, g.n, v));
  j["vertices"] = vs;
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const auto& e : g.edges) {
    nlohmann::ordered_json je;
    je["i"] = e.i;
    je["j"] = e.j;
    je["u"] = vertex_name(names, g.n, e.i);
    je["v"] = vertex_name(names, g.n, e.j);
    je["weight"] = e.weight;
    edges.push_back(std::move(je));
  }
  j["edges"] = std::move(edges);
  return j.dump(2) + "\n";
}

CorpGraph parse_edge_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CorpGraph g;
    g.n = j.at("n").get<int>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "tree") {
      g.kind = GraphKind::kTree;
    } else if (kind == "tree-plus") {
      g.kind = GraphKind::kTreePlus;
    } else {
      throw Error(ErrorCode::kUnknownFormat, "graph kind " + kind);
    }
    g.k_extra = j.value("k_extra", 0);
    for (const auto& e : j.at("edges")) {
      Edge x{e.at("i").get<int>(), e.at("j").get<int>(), e.at("weight").get<double>()};
      if (x.i < 0 || x.j >= g.n || x.i >= x.j) throw Error(ErrorCode::kBadGraph, "edge index");
      g.edges.push_back(x);
    }
    return g;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kBadGraph, ex.what());
  }
}

}  // namespace corpgnn
