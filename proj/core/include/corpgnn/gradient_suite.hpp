#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpgnn/model.hpp"

namespace corpgnn {

struct GradientSuiteOptions {
  int seeds = 20;
  std::uint64_t base_seed = 0;
  double eps = 1e-5;
  double op_tolerance = 1e-6;
  double model_tolerance = 1e-4;
};

struct GradientCheckEntry {
  std::string name;  // op name or "model"
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool finite = true;
  int redraws = 0;  // model checks: points rejected for sitting near a kink

  bool passed() const { return finite && max_rel_error < tolerance; }
};

struct GradientSuiteReport {
  GradientSuiteOptions options;
  std::vector<GradientCheckEntry> entries;

  bool all_finite() const;
  bool all_passed() const;
  double worst_op_error() const;
  double worst_model_error() const;
  nlohmann::ordered_json to_json() const;
};

/// Names of the per-op checks, in execution order.
const std::vector<std::string>& gradient_op_names();

/// Central-difference check of one diffcore op on inputs drawn in [−2, 2]
/// (ReLU inputs kept at least 1e-3 away from zero).
GradientCheckEntry check_op_gradient(const std::string& op, std::uint64_t seed, double eps, double tolerance);

/// Random two-graph batch for model-level checks.
GraphBatch random_two_graph_batch(std::uint64_t seed, int node_in_dim, int num_classes);

inline constexpr double kKinkMargin = 1e-4;
inline constexpr int kMaxKinkRedraws = 500;

/// Distance of a forward pass from the nearest non-differentiable point:
/// the smallest |ReLU input| and the smallest per-graph gap between the
/// lowest kept and highest dropped TopK score.
double kink_margin(const ForwardCache& cache);

/// Full-model cross-entropy gradient check at a randomized parameter point,
/// redrawn (up to kMaxKinkRedraws times) until kink_margin >= kKinkMargin.
GradientCheckEntry check_model_gradient(std::uint64_t seed, double eps, double tolerance,
                                        const ModelConfig& base = ModelConfig{});

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options);

}  // namespace corpgnn
