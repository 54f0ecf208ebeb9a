#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "corpgnn/dataset.hpp"
#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

enum Aspect { kSolvency = 0, kProfitability, kOperations, kCash, kGrowth, kNumAspects };

struct IndicatorMix {
  std::array<double, kNumAspects> loading;
  double offset;
  double scale;
};

// One row per indicator in canonical schema order. Positive loadings move
// with credit quality; leverage-type indicators load negatively.
const std::array<IndicatorMix, kNumIndicators>& mixes() {
  static const std::array<IndicatorMix, kNumIndicators> table = {{
      //  solv   prof   ops    cash   grow     offset   scale
      {{0.0, 0.0, 0.2, 0.0, 0.3}, 1000.0, 300.0},   // total_assets
      {{0.0, 0.0, 0.0, 0.8, 0.0}, 120.0, 40.0},     // cash_and_equivalents
      {{0.6, 0.0, 0.0, 0.0, 0.3}, 450.0, 150.0},    // net_assets
      {{-0.5, 0.0, 0.0, 0.0, 0.0}, 550.0, 150.0},   // total_liabilities
      {{-0.6, 0.0, 0.0, 0.0, 0.0}, 300.0, 100.0},   // interest_bearing_debt
      {{-0.5, 0.0, 0.0, -0.3, 0.0}, 180.0, 90.0},   // net_debt
      {{0.0, 0.2, 0.0, 0.8, 0.0}, 80.0, 40.0},      // cf_operating
      {{0.0, 0.0, 0.0, 0.0, -0.4}, -60.0, 30.0},    // cf_investing
      {{-0.3, 0.0, 0.0, 0.0, 0.0}, -10.0, 25.0},    // cf_financing
      {{0.0, 0.0, 0.6, 0.0, 0.3}, 800.0, 250.0},    // main_business_revenue
      {{0.0, 0.8, 0.0, 0.0, 0.0}, 150.0, 60.0},     // main_business_profit
      {{0.0, 0.7, 0.0, 0.2, 0.0}, 130.0, 50.0},     // ebitda
      {{0.0, 0.9, 0.0, 0.0, 0.0}, 50.0, 40.0},      // net_profit
      {{0.0, 0.7, 0.0, 0.0, 0.0}, 0.18, 0.06},      // main_business_profit_margin
      {{0.0, 0.0, 0.0, 0.0, 0.9}, 0.08, 0.10},      // revenue_growth_rate
      {{0.0, 0.6, 0.3, 0.0, 0.0}, 0.05, 0.03},      // total_asset_return_rate
      {{0.0, 0.7, 0.0, 0.0, 0.0}, 0.10, 0.06},      // return_on_net_assets
      {{0.0, 0.5, 0.2, 0.0, 0.0}, 0.16, 0.05},      // ebitda_over_revenue
      {{0.0, 0.0, 0.0, 0.6, 0.0}, 0.70, 0.25},      // ocf_over_ebitda
      {{0.7, 0.0, 0.0, 0.0, 0.0}, 1.50, 0.40},      // current_ratio
      {{0.6, 0.0, 0.0, 0.2, 0.0}, 1.10, 0.35},      // quick_ratio
      {{0.0, 0.0, 0.8, 0.0, 0.0}, 6.0, 2.0},        // inventory_turnover
      {{-0.8, 0.0, 0.0, 0.0, 0.0}, 0.55, 0.12},     // asset_liability_ratio
      {{-0.4, 0.0, 0.0, 0.0, 0.0}, 0.45, 0.12},     // short_term_debt_over_total_debt
      {{-0.6, 0.0, 0.0, 0.0, 0.0}, 0.40, 0.10},     // ibd_over_total_capital
      {{0.2, 0.0, 0.0, 0.7, 0.0}, 0.30, 0.12},      // cash_ratio
      {{0.4, 0.0, 0.0, 0.5, 0.0}, 0.35, 0.15},      // cash_over_total_debt
      {{0.4, 0.5, 0.0, 0.0, 0.0}, 5.0, 2.5},        // interest_coverage
      {{0.4, 0.4, 0.0, 0.0, 0.0}, 0.45, 0.20},      // ebitda_over_ibd
  }};
  return table;
}

// Shared business-cycle term, identical for every enterprise in a year.
double macro_cycle(int year_index) { return 0.1 * std::sin(1.3 * static_cast<double>(year_index)); }

}  // namespace

int level_from_quality(double q) {
  const int level = 1 + static_cast<int>(std::floor(10.0 * (1.0 - q)));
  return std::clamp(level, 1, kNumRatingLevels);
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_enterprises < 10) throw Error(ErrorCode::kInvalidArgument, "need at least 10 enterprises");
  if (cfg.n_years < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 years");
  if (!(cfg.noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto& table = mixes();

  const int width = static_cast<int>(std::to_string(cfg.n_enterprises).size());
  SyntheticData data;
  data.panels.reserve(static_cast<std::size_t>(cfg.n_enterprises));
  for (int e = 0; e < cfg.n_enterprises; ++e) {
    char id[32];
    std::snprintf(id, sizeof(id), "E%0*d", width, e + 1);

    const double q = unif(rng);
    std::array<double, kNumAspects> aspect{};
    for (auto& a : aspect) a = (q - 0.5) + cfg.noise_sigma * gauss(rng);

    IndicatorPanel p;
    p.enterprise_id = id;
    p.values = Array2(static_cast<std::size_t>(cfg.n_years), kNumIndicators);
    const int level = level_from_quality(q);
    for (int t = 0; t < cfg.n_years; ++t) {
      p.years.push_back(cfg.first_year + t);
      p.labels.emplace_back(level);
      const double cycle = macro_cycle(t);
      for (std::size_t i = 0; i < kNumIndicators; ++i) {
        const auto& mix = table[i];
        double latent = 0.0;
        for (int a = 0; a < kNumAspects; ++a) latent += mix.loading[a] * aspect[a];
        // Alternate the cycle sensitivity so indicators do not co-move trivially.
        latent += (i % 2 == 0 ? cycle : -0.5 * cycle);
        latent += cfg.noise_sigma * gauss(rng);
        p.values(static_cast<std::size_t>(t), i) = mix.offset + mix.scale * latent;
      }
    }
    data.truth.emplace_back(p.enterprise_id, q);
    data.panels.push_back(std::move(p));
  }
  return data;
}

std::string format_truth(const SyntheticData& data) {
  std::string out = "enterprise_id,q_score\n";
  for (const auto& [id, q] : data.truth) {
    out += id;
    out += ',';
    out += format_double(q);
    out += '\n';
  }
  return out;
}

std::filesystem::path truth_path_for(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p.replace_extension(".truth.csv");
  return p;
}

}  // namespace corpgnn
