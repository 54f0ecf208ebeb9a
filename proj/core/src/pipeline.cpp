#include "corpgnn/pipeline.hpp"

#include <algorithm>
#include <map>

#include "corpgnn/error.hpp"

namespace corpgnn {

// ---- configs ----------------------------------------------------------------

void MappingConfig::validate() const {
  if (window < 2) throw Error(ErrorCode::kInvalidArgument, "window must be >= 2");
  if (plus_k < 0) throw Error(ErrorCode::kInvalidArgument, "plus-k must be >= 0");
}

nlohmann::ordered_json MappingConfig::to_json() const {
  nlohmann::ordered_json j;
  j["window"] = window;
  j["graph"] = graph_kind_name(graph);
  j["plus_k"] = plus_k;
  j["abs_similarity"] = abs_similarity;
  j["global_graph"] = global_graph;
  return j;
}

MappingConfig MappingConfig::from_json(const nlohmann::ordered_json& j) {
  MappingConfig c;
  c.window = j.at("window").get<int>();
  c.graph = parse_graph_kind(j.at("graph").get<std::string>());
  c.plus_k = j.at("plus_k").get<int>();
  c.abs_similarity = j.at("abs_similarity").get<bool>();
  c.global_graph = j.at("global_graph").get<bool>();
  c.validate();
  return c;
}

void DataConfig::validate() const {
  if (!is_supported_class_count(num_classes)) {
    throw Error(ErrorCode::kInvalidArgument, "classes must be one of {3, 5, 8}");
  }
  if (sme_quantile && !(*sme_quantile > 0.0 && *sme_quantile < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sme quantile must be in (0, 1)");
  }
}

nlohmann::ordered_json DataConfig::to_json() const {
  nlohmann::ordered_json j;
  j["num_classes"] = num_classes;
  j["split"] = {split.train, split.val, split.test};
  j["split_seed"] = split_seed;
  j["sme_quantile"] = sme_quantile ? nlohmann::ordered_json(*sme_quantile) : nlohmann::ordered_json(nullptr);
  j["zero_variance"] = zero_variance_name(zero_variance);
  return j;
}

DataConfig DataConfig::from_json(const nlohmann::ordered_json& j) {
  DataConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  const auto r = j.at("split").get<std::vector<double>>();
  if (r.size() != 3) throw Error(ErrorCode::kCorruptCheckpoint, "split must have three ratios");
  c.split = {r[0], r[1], r[2]};
  c.split_seed = j.at("split_seed").get<std::uint64_t>();
  if (!j.at("sme_quantile").is_null()) c.sme_quantile = j.at("sme_quantile").get<double>();
  c.zero_variance = parse_zero_variance(j.at("zero_variance").get<std::string>());
  c.validate();
  return c;
}

std::string_view zero_variance_name(ZeroVariancePolicy policy) {
  switch (policy) {
    case ZeroVariancePolicy::kKeepUnitStd: return "keep";
    case ZeroVariancePolicy::kDrop: return "drop";
    case ZeroVariancePolicy::kFail: return "fail";
  }
  return "keep";
}

ZeroVariancePolicy parse_zero_variance(std::string_view name) {
  if (name == "keep") return ZeroVariancePolicy::kKeepUnitStd;
  if (name == "drop") return ZeroVariancePolicy::kDrop;
  if (name == "fail") return ZeroVariancePolicy::kFail;
  throw Error(ErrorCode::kInvalidArgument, "zero-variance policy must be keep, drop or fail");
}

GraphKind parse_graph_kind(std::string_view name) {
  if (name == "tree") return GraphKind::kTree;
  if (name == "tree-plus") return GraphKind::kTreePlus;
  throw Error(ErrorCode::kInvalidArgument, "graph must be tree or tree-plus, got " + std::string(name));
}

nlohmann::ordered_json standardization_to_json(const Standardization& s) {
  nlohmann::ordered_json j;
  j["means"] = s.means;
  j["stds"] = s.stds;
  j["zero_variance"] = std::vector<bool>(s.zero_variance);
  j["policy"] = zero_variance_name(s.policy);
  return j;
}

Standardization standardization_from_json(const nlohmann::ordered_json& j) {
  Standardization s;
  s.means = j.at("means").get<std::vector<double>>();
  s.stds = j.at("stds").get<std::vector<double>>();
  s.zero_variance = j.at("zero_variance").get<std::vector<bool>>();
  s.policy = parse_zero_variance(j.at("policy").get<std::string>());
  if (s.means.size() != s.stds.size() || s.means.size() != s.zero_variance.size()) {
    throw Error(ErrorCode::kCorruptCheckpoint, "standardization vectors differ in length");
  }
  return s;
}

// ---- samples ------------------------------------------------------------------

CorpGraph build_graph(const Array2& indicator_rows, const MappingConfig& cfg) {
  SimilarityMatrix s = cosine_similarity(indicator_rows);
  if (cfg.abs_similarity) s = s.absolute();
  CorpGraph tree = max_spanning_tree(s);
  if (cfg.graph == GraphKind::kTreePlus) return augment_plus(s, tree, cfg.plus_k);
  return tree;
}

Array2 node_features(const Array2& window_rows, int window) {
  const auto w = static_cast<std::size_t>(window);
  if (window_rows.rows() > w) throw Error(ErrorCode::kShapeMismatch, "more rows than the window");
  const std::size_t pad = w - window_rows.rows();
  Array2 f(window_rows.cols(), w);
  for (std::size_t t = 0; t < window_rows.rows(); ++t)
    for (std::size_t i = 0; i < window_rows.cols(); ++i) f(i, pad + t) = window_rows(t, i);
  return f;
}

GraphSample make_sample(const IndicatorPanel& standardized, int year, int label, const MappingConfig& cfg,
                        const CorpGraph* shared_graph) {
  const Array2 rows = indicator_vectors(standardized, year, cfg.window);
  const CorpGraph g = shared_graph ? *shared_graph : build_graph(rows, cfg);
  GraphSample s;
  s.key = {standardized.enterprise_id, year};
  s.label = label;
  s.features = node_features(rows, cfg.window);
  s.edges.reserve(g.edges.size());
  for (const auto& e : g.edges) s.edges.emplace_back(e.i, e.j);
  return s;
}

PreparedData prepare_data(const std::vector<IndicatorPanel>& raw, const DataConfig& data_cfg,
                          const MappingConfig& mapping_cfg, const Standardization* fixed_stats,
                          const CorpGraph* fixed_graph) {
  data_cfg.validate();
  mapping_cfg.validate();
  PreparedData out;
  out.labels = LabelSpec::for_classes(data_cfg.num_classes);
  out.panels = data_cfg.sme_quantile ? filter_sme(raw, *data_cfg.sme_quantile) : raw;
  out.split = split_dataset(out.panels, data_cfg.split, data_cfg.split_seed, out.labels);

  if (fixed_stats) {
    out.stats = *fixed_stats;
    out.standardized = apply_standardization(out.panels, out.stats);
  } else {
    auto fit_rows = all_rows_of(out.panels, out.split.train_enterprises);
    auto [std_panels, stats] = standardize(out.panels, fit_rows, data_cfg.zero_variance);
    out.standardized = std::move(std_panels);
    out.stats = std::move(stats);
  }

  std::map<std::string, const IndicatorPanel*> by_id;
  for (const auto& p : out.standardized) by_id[p.enterprise_id] = &p;

  if (mapping_cfg.global_graph) {
    if (fixed_graph) {
      out.shared_graph = *fixed_graph;
    } else {
      std::size_t n_rows = 0;
      for (const auto& id : out.split.train_enterprises) n_rows += by_id.at(id)->num_years();
      Array2 stacked(n_rows, kNumIndicators);
      std::size_t r = 0;
      for (const auto& id : out.split.train_enterprises) {
        const auto& v = by_id.at(id)->values;
        for (std::size_t k = 0; k < v.rows(); ++k, ++r) {
          auto src = v.row(k);
          std::copy(src.begin(), src.end(), stacked.row(r).begin());
        }
      }
      out.shared_graph = build_graph(stacked, mapping_cfg);
    }
  }
  const CorpGraph* shared = out.shared_graph ? &*out.shared_graph : nullptr;

  auto build = [&](const std::vector<SampleKey>& keys, std::vector<GraphSample>& dst) {
    for (const auto& key : keys) {
      const IndicatorPanel& p = *by_id.at(key.enterprise_id);
      const auto row = p.row_of(key.year);
      const int label = out.labels.coarsen(*p.labels[*row]);
      try {
        dst.push_back(make_sample(p, key.year, label, mapping_cfg, shared));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInsufficientHistory) throw;
        ++out.dropped_short_history;
      }
    }
  };
  build(out.split.train, out.train);
  build(out.split.validation, out.validation);
  build(out.split.test, out.test);
  return out;
}

}  // namespace corpgnn
