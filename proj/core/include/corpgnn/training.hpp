#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpgnn/dataset.hpp"
#include "corpgnn/diffcore.hpp"
#include "corpgnn/model.hpp"

namespace corpgnn {

/// One (enterprise, year) graph ready for batching.
struct GraphSample {
  SampleKey key;
  int label = 0;
  Array2 features;  // n_nodes × node_in_dim
  EdgeList edges;   // local node ids
};

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int epochs = 120;
  int batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double restart_period_0 = 10.0;  // epochs
  double restart_mult = 2.0;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  int early_stop_patience = 30;  // 0 disables early stopping
  bool class_weights = false;  // inverse-frequency weighting of the loss

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Cosine annealing with warm restarts at fractional epoch `t`.
double warm_restart_lr(double t, const TrainConfig& cfg);

struct OptimizerState {
  std::vector<Array2> first;   // adam m, or sgd velocity
  std::vector<Array2> second;  // adam v
  std::int64_t step = 0;

  static OptimizerState for_params(const ParameterStore& params);
};

/// One update from the gradients held in `params`. Throws
/// kNonFiniteGradient before touching anything if a gradient is NaN/Inf.
void optimizer_step(ParameterStore& params, OptimizerState& state, double lr, const TrainConfig& cfg);

/// Concatenates samples block-diagonally.
GraphBatch collate(std::span<const GraphSample* const> samples);
GraphBatch collate(std::span<const GraphSample> samples);

/// Shuffles deterministically by (seed, epoch) and chunks into batches.
std::vector<GraphBatch> make_batches(std::span<const GraphSample> samples, int batch_size,
                                     std::uint64_t seed, int epoch);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct FitResult {
  ParameterStore best_params;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> history;
};

struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;
  Prediction prediction;
  std::vector<int> labels;
};

/// Forward pass over `samples` in chunks; loss is the unweighted mean.
EvalSummary evaluate(std::span<const GraphSample> samples, const ParameterStore& params,
                     const ModelConfig& cfg, int chunk = 256);

/// Inverse-frequency weights n / (C · n_c); absent classes get weight 0.
std::vector<double> inverse_frequency_weights(std::span<const GraphSample> samples, int num_classes);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains with best-validation-loss checkpointing and early stopping.
/// With an empty validation set the training loss drives selection.
FitResult fit(std::span<const GraphSample> train, std::span<const GraphSample> validation,
              const ModelConfig& model_cfg, const TrainConfig& train_cfg,
              const EpochCallback& on_epoch = {});

std::string format_history(const std::vector<EpochRecord>& history);

}  // namespace corpgnn
