#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "corpgnn/diffcore.hpp"

namespace corpgnn {

inline constexpr std::size_t kNumIndicators = 29;
inline constexpr int kNumRatingLevels = 10;

/// The 29 financial indicators in canonical column order.
class IndicatorSchema {
 public:
  IndicatorSchema();
  explicit IndicatorSchema(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
};

const IndicatorSchema& default_schema();

/// One enterprise: years ascending, values |years| × 29, optional labels.
struct IndicatorPanel {
  std::string enterprise_id;
  std::vector<int> years;
  Array2 values;
  std::vector<std::optional<int>> labels;  // rating level 1..10 per year

  std::size_t num_years() const noexcept { return years.size(); }
  /// Row index of `year`, if present.
  std::optional<std::size_t> row_of(int year) const;
};

struct SampleKey {
  std::string enterprise_id;
  int year = 0;

  auto operator<=>(const SampleKey&) const = default;
};

// ---- CSV ingestion ----------------------------------------------------------

std::vector<IndicatorPanel> load_dataset(const std::filesystem::path& path,
                                         const IndicatorSchema& schema = default_schema());
/// Same as load_dataset but reading CSV text already in memory.
std::vector<IndicatorPanel> parse_dataset(std::string_view csv_text,
                                          const IndicatorSchema& schema = default_schema());

/// Header `enterprise_id,year,rating,<names>`; blank rating for unlabeled rows.
std::string format_dataset(const std::vector<IndicatorPanel>& panels,
                           const IndicatorSchema& schema = default_schema());
void write_dataset(const std::filesystem::path& path, const std::vector<IndicatorPanel>& panels,
                   const IndicatorSchema& schema = default_schema());

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

// ---- standardization ----------------------------------------------------------

enum class ZeroVariancePolicy {
  kKeepUnitStd,  // keep the indicator, std := 1
  kDrop,         // zero the column after centering; vertex stays in the graph
  kFail,         // throw ZeroVariance
};

struct Standardization {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<bool> zero_variance;
  ZeroVariancePolicy policy = ZeroVariancePolicy::kKeepUnitStd;

  /// Applies (x − mean)/std column-wise, honoring the policy.
  Array2 apply(const Array2& values) const;
};

/// Fits population mean/std on the rows named by `fit_keys` only, then
/// transforms every panel.
std::pair<std::vector<IndicatorPanel>, Standardization> standardize(
    const std::vector<IndicatorPanel>& panels, const std::vector<SampleKey>& fit_keys,
    ZeroVariancePolicy policy = ZeroVariancePolicy::kKeepUnitStd);

std::vector<IndicatorPanel> apply_standardization(const std::vector<IndicatorPanel>& panels,
                                                  const Standardization& stats);

// ---- SME filter --------------------------------------------------------------

/// Drops enterprises whose mean raw total_assets is strictly above the
/// nearest-rank `quantile` of those means. Ties at the threshold are kept.
std::vector<IndicatorPanel> filter_sme(const std::vector<IndicatorPanel>& panels,
                                       double quantile = 0.80,
                                       const IndicatorSchema& schema = default_schema());

// ---- labels --------------------------------------------------------------------

class LabelSpec {
 public:
  /// Default contiguous bins for 3, 5 or 8 classes.
  static LabelSpec for_classes(int num_classes);
  /// `upper_levels[c]` is the highest rating level in class c; must end at 10.
  explicit LabelSpec(std::vector<int> upper_levels);

  int num_classes() const noexcept { return static_cast<int>(upper_.size()); }
  const std::vector<int>& upper_levels() const noexcept { return upper_; }
  int coarsen(int level) const;

 private:
  std::vector<int> upper_;
};

inline int coarsen_label(int level, const LabelSpec& spec) { return spec.coarsen(level); }

bool is_supported_class_count(int num_classes);

// ---- split -----------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<SampleKey> train;
  std::vector<SampleKey> validation;
  std::vector<SampleKey> test;
  std::vector<std::string> train_enterprises;
  std::vector<std::string> validation_enterprises;
  std::vector<std::string> test_enterprises;
  std::uint64_t seed = 0;
};

/// Enterprise-level split; every labeled (enterprise, year) lands in the
/// split of its enterprise.
DatasetSplit split_dataset(const std::vector<IndicatorPanel>& panels, SplitRatios ratios,
                           std::uint64_t seed, const LabelSpec& labels);

/// All (enterprise, year) keys of the given enterprises (labeled or not).
std::vector<SampleKey> all_rows_of(const std::vector<IndicatorPanel>& panels,
                                   const std::vector<std::string>& enterprises);

// ---- synthetic data ---------------------------------------------------------

struct SyntheticConfig {
  int n_enterprises = 600;
  int n_years = 8;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
  int first_year = 2014;
};

struct SyntheticData {
  std::vector<IndicatorPanel> panels;  // raw units, labeled every year
  std::vector<std::pair<std::string, double>> truth;  // (enterprise_id, q_score)
};

/// Latent-factor generator: quality q ~ U(0,1) drives five aspect factors,
/// each indicator is a fixed sparse mix of aspects plus per-year noise,
/// and the level is 1 + floor(10·(1 − q)) clipped to 1..10.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

int level_from_quality(double q);

std::string format_truth(const SyntheticData& data);
/// `data.csv` -> `data.truth.csv`.
std::filesystem::path truth_path_for(const std::filesystem::path& data_path);

}  // namespace corpgnn
