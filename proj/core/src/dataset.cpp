#include "corpgnn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

const std::vector<std::string>& canonical_names() {
  static const std::vector<std::string> names = {
      "total_assets",
      "cash_and_equivalents",
      "net_assets",
      "total_liabilities",
      "interest_bearing_debt",
      "net_debt",
      "cf_operating",
      "cf_investing",
      "cf_financing",
      "main_business_revenue",
      "main_business_profit",
      "ebitda",
      "net_profit",
      "main_business_profit_margin",
      "revenue_growth_rate",
      "total_asset_return_rate",
      "return_on_net_assets",
      "ebitda_over_revenue",
      "ocf_over_ebitda",
      "current_ratio",
      "quick_ratio",
      "inventory_turnover",
      "asset_liability_ratio",
      "short_term_debt_over_total_debt",
      "ibd_over_total_capital",
      "cash_ratio",
      "cash_over_total_debt",
      "interest_coverage",
      "ebitda_over_ibd",
  };
  return names;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one CSV record; double-quoted fields may contain commas.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

struct RawRow {
  int year;
  std::optional<int> rating;
  std::vector<double> values;
};

}  // namespace

// ---- schema -------------------------------------------------------------------

IndicatorSchema::IndicatorSchema() : names_(canonical_names()) {}

IndicatorSchema::IndicatorSchema(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "indicator names must be unique");
  }
}

std::optional<std::size_t> IndicatorSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

const IndicatorSchema& default_schema() {
  static const IndicatorSchema schema;
  return schema;
}

std::optional<std::size_t> IndicatorPanel::row_of(int year) const {
  auto it = std::lower_bound(years.begin(), years.end(), year);
  if (it == years.end() || *it != year) return std::nullopt;
  return static_cast<std::size_t>(it - years.begin());
}

// ---- CSV ------------------------------------------------------------------------

std::vector<IndicatorPanel> parse_dataset(std::string_view csv_text, const IndicatorSchema& schema) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= csv_text.size()) {
      std::size_t nl = csv_text.find('\n', start);
      if (nl == std::string_view::npos) nl = csv_text.size();
      auto line = csv_text.substr(start, nl - start);
      if (!trim(line).empty()) lines.push_back(line);
      start = nl + 1;
    }
  }
  if (lines.empty()) throw Error(ErrorCode::kMissingColumn, "enterprise_id (empty file)");

  auto header_view = lines.front();
  if (header_view.starts_with("\xEF\xBB\xBF")) header_view.remove_prefix(3);
  const auto header = split_record(header_view);
  auto find_col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };

  const auto id_col = find_col("enterprise_id");
  if (!id_col) throw Error(ErrorCode::kMissingColumn, "enterprise_id");
  const auto year_col = find_col("year");
  if (!year_col) throw Error(ErrorCode::kMissingColumn, "year");
  const auto rating_col = find_col("rating");
  std::vector<std::size_t> ind_cols;
  for (const auto& name : schema.names()) {
    auto c = find_col(name);
    if (!c) throw Error(ErrorCode::kMissingColumn, name);
    ind_cols.push_back(*c);
  }

  std::map<std::string, std::map<int, RawRow>> grouped;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row_no = li + 1;  // 1-based line number in the file
    const auto fields = split_record(lines[li]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kNonNumericCell,
                  "row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    const std::string& id = fields[*id_col];
    if (id.empty()) {
      throw Error(ErrorCode::kNonNumericCell, "row " + std::to_string(row_no) + ", col enterprise_id: empty");
    }
    auto year = parse_number<int>(fields[*year_col]);
    if (!year) {
      throw Error(ErrorCode::kNonNumericCell, "row " + std::to_string(row_no) + ", col year");
    }
    RawRow row{*year, std::nullopt, {}};
    if (rating_col && !fields[*rating_col].empty()) {
      auto r = parse_number<int>(fields[*rating_col]);
      if (!r) throw Error(ErrorCode::kNonNumericCell, "row " + std::to_string(row_no) + ", col rating");
      if (*r < 1 || *r > kNumRatingLevels) {
        throw Error(ErrorCode::kLevelOutOfRange,
                    "row " + std::to_string(row_no) + ": rating " + std::to_string(*r));
      }
      row.rating = *r;
    }
    row.values.reserve(ind_cols.size());
    for (std::size_t k = 0; k < ind_cols.size(); ++k) {
      auto v = parse_number<double>(fields[ind_cols[k]]);
      if (!v) {
        throw Error(ErrorCode::kNonNumericCell,
                    "row " + std::to_string(row_no) + ", col " + schema.name(k));
      }
      row.values.push_back(*v);
    }
    auto& by_year = grouped[id];
    if (by_year.count(*year)) {
      throw Error(ErrorCode::kDuplicateEnterpriseYear, id + ", " + std::to_string(*year));
    }
    by_year.emplace(*year, std::move(row));
  }

  std::vector<IndicatorPanel> panels;
  panels.reserve(grouped.size());
  for (auto& [id, by_year] : grouped) {
    IndicatorPanel p;
    p.enterprise_id = id;
    p.values = Array2(by_year.size(), schema.size());
    std::size_t r = 0;
    for (auto& [year, raw] : by_year) {
      p.years.push_back(year);
      p.labels.push_back(raw.rating);
      std::copy(raw.values.begin(), raw.values.end(), p.values.row(r).begin());
      ++r;
    }
    panels.push_back(std::move(p));
  }
  return panels;
}

std::vector<IndicatorPanel> load_dataset(const std::filesystem::path& path,
                                         const IndicatorSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), schema);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::kInvalidArgument, "cannot format double");
  return std::string(buf, ptr);
}

std::string format_dataset(const std::vector<IndicatorPanel>& panels, const IndicatorSchema& schema) {
  std::string out = "enterprise_id,year,rating";
  for (const auto& n : schema.names()) {
    out += ',';
    out += n;
  }
  out += '\n';
  for (const auto& p : panels) {
    for (std::size_t r = 0; r < p.num_years(); ++r) {
      out += p.enterprise_id;
      out += ',';
      out += std::to_string(p.years[r]);
      out += ',';
      if (r < p.labels.size() && p.labels[r]) out += std::to_string(*p.labels[r]);
      for (double v : p.values.row(r)) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<IndicatorPanel>& panels,
                   const IndicatorSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << format_dataset(panels, schema);
}

// ---- standardization ------------------------------------------------------------

Array2 Standardization::apply(const Array2& values) const {
  if (values.cols() != means.size()) {
    throw Error(ErrorCode::kShapeMismatch, "standardization width differs from panel width");
  }
  Array2 out = values;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      if (zero_variance[c] && policy == ZeroVariancePolicy::kDrop) {
        row[c] = 0.0;
      } else {
        row[c] = (row[c] - means[c]) / stds[c];
      }
    }
  }
  return out;
}

std::vector<IndicatorPanel> apply_standardization(const std::vector<IndicatorPanel>& panels,
                                                  const Standardization& stats) {
  std::vector<IndicatorPanel> out = panels;
  for (auto& p : out) p.values = stats.apply(p.values);
  return out;
}

std::pair<std::vector<IndicatorPanel>, Standardization> standardize(
    const std::vector<IndicatorPanel>& panels, const std::vector<SampleKey>& fit_keys,
    ZeroVariancePolicy policy) {
  if (fit_keys.empty()) throw Error(ErrorCode::kInvalidArgument, "standardize: empty fit set");
  if (panels.empty()) throw Error(ErrorCode::kInvalidArgument, "standardize: no panels");
  const std::size_t width = panels.front().values.cols();

  std::map<std::string, const IndicatorPanel*> by_id;
  for (const auto& p : panels) by_id[p.enterprise_id] = &p;

  std::vector<std::span<const double>> rows;
  rows.reserve(fit_keys.size());
  for (const auto& key : fit_keys) {
    auto it = by_id.find(key.enterprise_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kInvalidArgument, "fit key for unknown enterprise " + key.enterprise_id);
    }
    auto r = it->second->row_of(key.year);
    if (!r) {
      throw Error(ErrorCode::kInvalidArgument,
                  "fit key " + key.enterprise_id + "/" + std::to_string(key.year) + " has no row");
    }
    rows.push_back(it->second->values.row(*r));
  }

  Standardization st;
  st.policy = policy;
  st.means.assign(width, 0.0);
  st.stds.assign(width, 1.0);
  st.zero_variance.assign(width, false);
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < width; ++c) {
    double sum = 0.0;
    for (const auto& row : rows) sum += row[c];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& row : rows) ss += (row[c] - mean) * (row[c] - mean);
    const double sd = std::sqrt(ss / n);
    st.means[c] = mean;
    // Constant up to rounding noise relative to the column's magnitude.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      if (policy == ZeroVariancePolicy::kFail) {
        throw Error(ErrorCode::kZeroVariance, c < default_schema().size() && width == kNumIndicators
                                                  ? default_schema().name(c)
                                                  : "column " + std::to_string(c));
      }
      st.zero_variance[c] = true;
      st.stds[c] = 1.0;
    } else {
      st.stds[c] = sd;
    }
  }
  return {apply_standardization(panels, st), std::move(st)};
}

// ---- SME filter -----------------------------------------------------------------

std::vector<IndicatorPanel> filter_sme(const std::vector<IndicatorPanel>& panels, double quantile,
                                       const IndicatorSchema& schema) {
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "filter_sme: quantile must be in (0, 1)");
  }
  if (panels.empty()) throw Error(ErrorCode::kEmptyAfterFilter, "no enterprises");
  const auto col = schema.index_of("total_assets");
  if (!col) throw Error(ErrorCode::kMissingColumn, "total_assets");

  std::vector<double> means;
  means.reserve(panels.size());
  for (const auto& p : panels) {
    double s = 0.0;
    for (std::size_t r = 0; r < p.num_years(); ++r) s += p.values(r, *col);
    means.push_back(p.num_years() ? s / static_cast<double>(p.num_years()) : 0.0);
  }
  std::vector<double> sorted = means;
  std::sort(sorted.begin(), sorted.end());
  // Nearest-rank: the smallest value whose rank is ≥ q·N.
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(quantile * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  const double threshold = sorted[rank - 1];

  std::vector<IndicatorPanel> out;
  for (std::size_t i = 0; i < panels.size(); ++i)
    if (!(means[i] > threshold)) out.push_back(panels[i]);
  if (out.empty()) throw Error(ErrorCode::kEmptyAfterFilter, "all enterprises removed");
  return out;
}

// ---- labels ------------------------------------------------------------------------

LabelSpec::LabelSpec(std::vector<int> upper_levels) : upper_(std::move(upper_levels)) {
  if (upper_.empty() || upper_.back() != kNumRatingLevels || upper_.front() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "label bins must cover levels 1..10");
  }
  for (std::size_t i = 1; i < upper_.size(); ++i) {
    if (upper_[i] <= upper_[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "label bins must be strictly ascending");
    }
  }
}

bool is_supported_class_count(int num_classes) {
  return num_classes == 3 || num_classes == 5 || num_classes == 8;
}

LabelSpec LabelSpec::for_classes(int num_classes) {
  switch (num_classes) {
    case 3: return LabelSpec({3, 6, 10});
    case 5: return LabelSpec({2, 4, 6, 8, 10});
    case 8: return LabelSpec({1, 2, 3, 4, 5, 6, 7, 10});
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "unsupported class count " + std::to_string(num_classes) + " (expected 3, 5 or 8)");
  }
}

int LabelSpec::coarsen(int level) const {
  if (level < 1 || level > kNumRatingLevels) {
    throw Error(ErrorCode::kLevelOutOfRange, "level " + std::to_string(level));
  }
  for (std::size_t c = 0; c < upper_.size(); ++c)
    if (level <= upper_[c]) return static_cast<int>(c);
  return num_classes() - 1;
}

// ---- split ---------------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<IndicatorPanel>& panels, SplitRatios ratios,
                           std::uint64_t seed, const LabelSpec& labels) {
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split ratios must be positive and sum to 1");
  }
  std::vector<std::string> ids;
  ids.reserve(panels.size());
  for (const auto& p : panels) ids.push_back(p.enterprise_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::mt19937_64 rng(seed);
  // Fisher–Yates with an explicit draw so the order is library independent.
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }

  const double n = static_cast<double>(ids.size());
  auto n_val = static_cast<std::size_t>(std::llround(ratios.val * n));
  auto n_test = static_cast<std::size_t>(std::llround(ratios.test * n));
  if (n_val + n_test >= ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, "too few enterprises for the requested split");
  }
  const std::size_t n_train = ids.size() - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  split.train_enterprises.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation_enterprises.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                                      ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test_enterprises.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  for (auto* v : {&split.train_enterprises, &split.validation_enterprises, &split.test_enterprises})
    std::sort(v->begin(), v->end());

  std::map<std::string, int> which;
  for (const auto& id : split.train_enterprises) which[id] = 0;
  for (const auto& id : split.validation_enterprises) which[id] = 1;
  for (const auto& id : split.test_enterprises) which[id] = 2;

  std::vector<bool> seen(static_cast<std::size_t>(labels.num_classes()), false);
  for (const auto& p : panels) {
    const int part = which.at(p.enterprise_id);
    for (std::size_t r = 0; r < p.num_years(); ++r) {
      if (r >= p.labels.size() || !p.labels[r]) continue;
      SampleKey key{p.enterprise_id, p.years[r]};
      if (part == 0) {
        split.train.push_back(key);
        seen[static_cast<std::size_t>(labels.coarsen(*p.labels[r]))] = true;
      } else if (part == 1) {
        split.validation.push_back(key);
      } else {
        split.test.push_back(key);
      }
    }
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw Error(ErrorCode::kClassMissingInTrain, "class " + std::to_string(c));
  }
  for (auto* v : {&split.train, &split.validation, &split.test}) std::sort(v->begin(), v->end());
  return split;
}

std::vector<SampleKey> all_rows_of(const std::vector<IndicatorPanel>& panels,
                                   const std::vector<std::string>& enterprises) {
  std::set<std::string> wanted(enterprises.begin(), enterprises.end());
  std::vector<SampleKey> keys;
  for (const auto& p : panels) {
    if (!wanted.count(p.enterprise_id)) continue;
    for (int y : p.years) keys.push_back({p.enterprise_id, y});
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace corpgnn
