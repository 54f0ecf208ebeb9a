#pragma once

// Glue between raw indicator panels and model-ready graph samples.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpgnn/dataset.hpp"
#include "corpgnn/graph_mapping.hpp"
#include "corpgnn/training.hpp"

namespace corpgnn {

struct MappingConfig {
  int window = 4;
  GraphKind graph = GraphKind::kTree;
  int plus_k = 10;
  bool abs_similarity = false;
  bool global_graph = false;  // one graph from all training rows, shared by every sample

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static MappingConfig from_json(const nlohmann::ordered_json& j);
};

struct DataConfig {
  int num_classes = 3;
  SplitRatios split;
  std::uint64_t split_seed = 0;
  std::optional<double> sme_quantile;  // unset: no SME filter
  ZeroVariancePolicy zero_variance = ZeroVariancePolicy::kKeepUnitStd;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static DataConfig from_json(const nlohmann::ordered_json& j);
};

std::string_view zero_variance_name(ZeroVariancePolicy policy);
ZeroVariancePolicy parse_zero_variance(std::string_view name);
GraphKind parse_graph_kind(std::string_view name);

nlohmann::ordered_json standardization_to_json(const Standardization& s);
Standardization standardization_from_json(const nlohmann::ordered_json& j);

/// Similarity → spanning tree → optional augmentation for one indicator matrix.
CorpGraph build_graph(const Array2& indicator_rows, const MappingConfig& cfg);

/// Node features (29 × window): each indicator's lookback values, oldest
/// first, zero-padded at the front when history is shorter than the window.
Array2 node_features(const Array2& window_rows, int window);

/// Graph sample for a standardized panel at `year`. Throws
/// kInsufficientHistory when fewer than two rows are available.
GraphSample make_sample(const IndicatorPanel& standardized, int year, int label, const MappingConfig& cfg,
                        const CorpGraph* shared_graph = nullptr);

struct PreparedData {
  std::vector<IndicatorPanel> panels;        // after the optional SME filter, raw units
  std::vector<IndicatorPanel> standardized;  // same panels, standardized
  Standardization stats;
  DatasetSplit split;
  LabelSpec labels = LabelSpec::for_classes(3);
  std::optional<CorpGraph> shared_graph;
  std::vector<GraphSample> train;
  std::vector<GraphSample> validation;
  std::vector<GraphSample> test;
  std::size_t dropped_short_history = 0;
};

/// Filter, split, standardize on training enterprises, and map every
/// labeled sample to a graph. With `fixed_stats` the standardization (and
/// `fixed_graph` the shared graph) are reused instead of refit.
PreparedData prepare_data(const std::vector<IndicatorPanel>& raw, const DataConfig& data_cfg,
                          const MappingConfig& mapping_cfg,
                          const Standardization* fixed_stats = nullptr,
                          const CorpGraph* fixed_graph = nullptr);

}  // namespace corpgnn
