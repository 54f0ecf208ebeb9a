#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpgnn/diffcore.hpp"

namespace corpgnn {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) start; NaN where undefined (macro)
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::vector<long long>> counts;  // rows = true, cols = predicted

  long long total() const;
  long long trace() const;
};

double accuracy(std::span<const int> preds, std::span<const int> labels);
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int num_classes);

/// Binary ROC by descending unique threshold; tied scores move together.
RocCurve binary_roc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Column `cls` of `scores` against (label == cls). Throws kDegenerateClass
/// when the class has no positives or no negatives.
RocCurve roc_one_vs_rest(const Array2& scores, std::span<const int> labels, int cls);

/// All B·C (score, is-true-class) pairs flattened into one binary ROC.
RocCurve micro_average_roc(const Array2& scores, std::span<const int> labels);

/// Mean of per-class TPR interpolated on the union of FPR knots.
RocCurve macro_average_roc(std::span<const RocCurve> per_class);

/// Trapezoidal area under (fpr, tpr) points.
double trapezoid_auc(std::span<const RocPoint> points);

struct MetricsReport {
  std::size_t num_samples = 0;
  int num_classes = 0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class_auc;  // empty when degenerate
  double micro_auc = 0.0;
  std::optional<double> macro_auc;
  ConfusionMatrix confusion;

  std::vector<std::optional<RocCurve>> per_class_roc;
  RocCurve micro_roc;
  std::optional<RocCurve> macro_roc;

  nlohmann::ordered_json to_json() const;
};

MetricsReport compute_metrics(const Array2& probs, std::span<const int> preds, std::span<const int> labels);

std::string format_roc_csv(const RocCurve& curve);

/// Writes metrics.json, roc_class<k>.csv, roc_micro.csv and roc_macro.csv into `dir`.
void export_metrics(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace corpgnn
