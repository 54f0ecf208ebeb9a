#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "corpgnn/diffcore.hpp"
#include "corpgnn/graph_mapping.hpp"
#include "corpgnn/model.hpp"
#include "corpgnn/pipeline.hpp"
#include "corpgnn/training.hpp"

namespace corpgnn {

inline constexpr int kCheckpointFormatVersion = 1;

/// Everything needed to rebuild samples and reproduce predictions.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  MappingConfig mapping;
  Standardization stats;
  std::optional<CorpGraph> shared_graph;
  ParameterStore params;
  int best_epoch = -1;

  nlohmann::ordered_json to_json() const;
  static Checkpoint from_json(const nlohmann::ordered_json& j);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws kFormatVersionMismatch or kCorruptCheckpoint.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace corpgnn
