#include "corpgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "corpgnn/dataset.hpp"
#include "corpgnn/error.hpp"

namespace corpgnn {

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (int c = 0; c < num_classes; ++c) t += counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  return t;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "accuracy: length mismatch");
  if (preds.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  if (preds.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "confusion: length mismatch");
  ConfusionMatrix m;
  m.num_classes = num_classes;
  m.counts.assign(static_cast<std::size_t>(num_classes), std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || preds[i] < 0 || preds[i] >= num_classes) {
      throw Error(ErrorCode::kLabelOutOfRange, "confusion: class id out of range");
    }
    ++m.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
  }
  return m;
}

double trapezoid_auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k) {
    area += (points[k].fpr - points[k - 1].fpr) * (points[k].tpr + points[k - 1].tpr) * 0.5;
  }
  return area;
}

RocCurve binary_roc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorCode::kShapeMismatch, "roc: length mismatch");
  std::size_t n_pos = 0;
  for (auto p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::kDegenerateClass, "need at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double thr = scores[order[k]];
    while (k < order.size() && scores[order[k]] == thr) {
      if (positive[order[k]]) ++tp; else ++fp;
      ++k;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos), thr});
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

RocCurve roc_one_vs_rest(const Array2& scores, std::span<const int> labels, int cls) {
  if (scores.rows() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "roc: label count");
  if (cls < 0 || static_cast<std::size_t>(cls) >= scores.cols()) {
    throw Error(ErrorCode::kLabelOutOfRange, "roc: class " + std::to_string(cls));
  }
  std::vector<double> s(labels.size());
  std::vector<std::uint8_t> pos(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s[i] = scores(i, static_cast<std::size_t>(cls));
    pos[i] = labels[i] == cls ? 1 : 0;
  }
  try {
    return binary_roc(s, pos);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateClass) throw;
    throw Error(ErrorCode::kDegenerateClass, "class " + std::to_string(cls));
  }
}

RocCurve micro_average_roc(const Array2& scores, std::span<const int> labels) {
  if (scores.rows() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "roc: label count");
  const std::size_t n = scores.rows() * scores.cols();
  std::vector<double> s(n);
  std::vector<std::uint8_t> flags(n);
  std::size_t k = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c, ++k) {
      s[k] = scores(r, c);
      flags[k] = static_cast<int>(c) == labels[r] ? 1 : 0;
    }
  }
  return binary_roc(s, flags);
}

namespace {

// Right-continuous step lookup matching ROC interpolation: the highest TPR
// reached at fpr (last point with that fpr), linear between knots.
double interp_tpr(const RocCurve& curve, double fpr) {
  const auto& pts = curve.points;
  std::size_t hi = 0;
  while (hi < pts.size() && pts[hi].fpr <= fpr) ++hi;
  if (hi == 0) return pts.front().tpr;
  if (hi == pts.size()) return pts.back().tpr;
  const auto& a = pts[hi - 1];
  const auto& b = pts[hi];
  if (b.fpr == a.fpr) return a.tpr;
  return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
}

}  // namespace

RocCurve macro_average_roc(std::span<const RocCurve> per_class) {
  if (per_class.empty()) throw Error(ErrorCode::kInvalidArgument, "macro ROC needs at least one curve");
  std::vector<double> grid;
  for (const auto& c : per_class)
    for (const auto& p : c.points) grid.push_back(p.fpr);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  RocCurve out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.points.push_back({0.0, 0.0, nan});
  for (double f : grid) {
    double sum = 0.0;
    for (const auto& c : per_class) sum += interp_tpr(c, f);
    const double tpr = sum / static_cast<double>(per_class.size());
    if (f == 0.0 && tpr == 0.0) continue;
    out.points.push_back({f, tpr, nan});
  }
  out.auc = trapezoid_auc(out.points);
  return out;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["num_samples"] = num_samples;
  j["num_classes"] = num_classes;
  j["accuracy"] = accuracy;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& a : per_class_auc) per.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json(nullptr));
  j["per_class_auc"] = std::move(per);
  j["micro_auc"] = micro_auc;
  j["macro_auc"] = macro_auc ? nlohmann::ordered_json(*macro_auc) : nlohmann::ordered_json(nullptr);
  j["confusion"] = confusion.counts;
  return j;
}

MetricsReport compute_metrics(const Array2& probs, std::span<const int> preds, std::span<const int> labels) {
  MetricsReport r;
  r.num_samples = labels.size();
  r.num_classes = static_cast<int>(probs.cols());
  r.accuracy = corpgnn::accuracy(preds, labels);
  r.confusion = confusion(preds, labels, r.num_classes);
  std::vector<RocCurve> valid;
  for (int c = 0; c < r.num_classes; ++c) {
    bool has_pos = false, has_neg = false;
    for (int y : labels) (y == c ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      RocCurve curve = roc_one_vs_rest(probs, labels, c);
      r.per_class_auc.emplace_back(curve.auc);
      valid.push_back(curve);
      r.per_class_roc.emplace_back(std::move(curve));
    } else {
      r.per_class_auc.emplace_back(std::nullopt);
      r.per_class_roc.emplace_back(std::nullopt);
    }
  }
  if (!labels.empty()) {
    r.micro_roc = micro_average_roc(probs, labels);
    r.micro_auc = r.micro_roc.auc;
  }
  if (!valid.empty()) {
    r.macro_roc = macro_average_roc(valid);
    r.macro_auc = r.macro_roc->auc;
  }
  return r;
}

std::string format_roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out += format_double(p.fpr);
    out += ',';
    out += format_double(p.tpr);
    out += ',';
    if (std::isinf(p.threshold)) {
      out += p.threshold > 0 ? "inf" : "-inf";
    } else if (!std::isnan(p.threshold)) {
      out += format_double(p.threshold);
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

void export_metrics(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
  for (std::size_t c = 0; c < report.per_class_roc.size(); ++c) {
    if (report.per_class_roc[c]) {
      write_text(dir / ("roc_class" + std::to_string(c) + ".csv"), format_roc_csv(*report.per_class_roc[c]));
    }
  }
  if (report.num_samples > 0) write_text(dir / "roc_micro.csv", format_roc_csv(report.micro_roc));
  if (report.macro_roc) write_text(dir / "roc_macro.csv", format_roc_csv(*report.macro_roc));
}

}  // namespace corpgnn
