#include "corpgnn/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

std::string shape_str(const Array2& a) {
  std::ostringstream os;
  os << a.rows() << "x" << a.cols();
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const Array2& a, const Array2& b) {
  throw Error(ErrorCode::kShapeMismatch,
              std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

void check_segments(std::span<const int> segments, std::size_t n_segments) {
  for (int s : segments) {
    if (s < 0 || static_cast<std::size_t>(s) >= n_segments) {
      throw Error(ErrorCode::kBadSegmentId,
                  "segment id " + std::to_string(s) + " outside [0, " +
                      std::to_string(n_segments) + ")");
    }
  }
}

void check_rows(std::span<const int> idx, std::size_t n_rows) {
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= n_rows) {
      throw Error(ErrorCode::kShapeMismatch,
                  "row index " + std::to_string(i) + " outside [0, " + std::to_string(n_rows) + ")");
    }
  }
}

constexpr double kTinyNorm = 1e-12;

}  // namespace

// ---- Array2 -------------------------------------------------------------------

Array2::Array2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array2::Array2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::kShapeMismatch,
                "data length " + std::to_string(data_.size()) + " for shape " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Array2::Array2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::kShapeMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

bool Array2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Array2& Array2::operator+=(const Array2& other) {
  if (!same_shape(other)) shape_error("operator+=", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Array2& Array2::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void require_finite(const Array2& a, const char* where) {
  if (!a.all_finite()) throw Error(ErrorCode::kNonFinite, std::string("non-finite output of ") + where);
}

Array2 transpose(const Array2& a) {
  Array2 out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

// ---- matmul -------------------------------------------------------------------

Array2 matmul(const Array2& a, const Array2& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Array2 out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

MatmulGrad matmul_backward(const Array2& a, const Array2& b, const Array2& dout) {
  if (dout.rows() != a.rows() || dout.cols() != b.cols()) shape_error("matmul_backward", a, dout);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  MatmulGrad g{Array2(m, k), Array2(k, n)};
  // dA = dOut · Bᵀ, accumulated row-wise over a transposed B so the inner
  // loop vectorizes; summation order over j matches the plain dot product.
  const Array2 bt = transpose(b);
  for (std::size_t i = 0; i < m; ++i) {
    const double* drow = dout.row(i).data();
    double* garow = g.da.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double dv = drow[j];
      const double* btrow = bt.row(j).data();
      for (std::size_t p = 0; p < k; ++p) garow[p] += dv * btrow[p];
    }
  }
  // dB = Aᵀ · dOut
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i).data();
    const double* drow = dout.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* gbrow = g.db.row(p).data();
      for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * drow[j];
    }
  }
  return g;
}

// ---- bias / activations ---------------------------------------------------

Array2 add_bias(const Array2& x, const Array2& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_bias", x, bias);
  Array2 out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bias(0, c);
  }
  require_finite(out, "add_bias");
  return out;
}

Array2 add_bias_backward(const Array2& dout) {
  Array2 db(1, dout.cols());
  for (std::size_t r = 0; r < dout.rows(); ++r)
    for (std::size_t c = 0; c < dout.cols(); ++c) db(0, c) += dout(r, c);
  return db;
}

Array2 relu(const Array2& x) {
  require_finite(x, "relu");  // max(NaN, 0) would silently give 0
  Array2 out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  require_finite(out, "relu");
  return out;
}

Array2 relu_backward(const Array2& x, const Array2& dout) {
  if (!x.same_shape(dout)) shape_error("relu_backward", x, dout);
  Array2 dx(x.rows(), x.cols());
  auto xs = x.data();
  auto ds = dout.data();
  auto out = dx.data();
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] > 0.0 ? ds[i] : 0.0;
  return dx;
}

Array2 tanh_op(const Array2& x) {
  Array2 out = x;
  for (double& v : out.data()) v = std::tanh(v);
  require_finite(out, "tanh_op");
  return out;
}

Array2 tanh_backward(const Array2& out, const Array2& dout) {
  if (!out.same_shape(dout)) shape_error("tanh_backward", out, dout);
  Array2 dx(out.rows(), out.cols());
  auto os = out.data();
  auto ds = dout.data();
  auto xs = dx.data();
  for (std::size_t i = 0; i < os.size(); ++i) xs[i] = (1.0 - os[i] * os[i]) * ds[i];
  return dx;
}

// ---- segment / gather / scale ----------------------------------------------

Array2 segment_mean(const Array2& x, std::span<const int> segments, std::size_t n_segments) {
  if (segments.size() != x.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "segment_mean: " + std::to_string(segments.size()) +
                                               " ids for " + std::to_string(x.rows()) + " rows");
  }
  check_segments(segments, n_segments);
  Array2 out(n_segments, x.cols());
  std::vector<std::size_t> count(n_segments, 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto s = static_cast<std::size_t>(segments[r]);
    ++count[s];
    auto orow = out.row(s);
    auto xrow = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) orow[c] += xrow[c];
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    if (count[s] == 0) continue;
    const double inv = 1.0 / static_cast<double>(count[s]);
    for (double& v : out.row(s)) v *= inv;
  }
  require_finite(out, "segment_mean");
  return out;
}

Array2 segment_mean_backward(const Array2& dout, std::span<const int> segments, std::size_t n_rows) {
  if (segments.size() != n_rows) {
    throw Error(ErrorCode::kShapeMismatch, "segment_mean_backward: segment list length");
  }
  check_segments(segments, dout.rows());
  std::vector<std::size_t> count(dout.rows(), 0);
  for (int s : segments) ++count[static_cast<std::size_t>(s)];
  Array2 dx(n_rows, dout.cols());
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto s = static_cast<std::size_t>(segments[r]);
    const double inv = 1.0 / static_cast<double>(count[s]);
    auto drow = dout.row(s);
    auto xrow = dx.row(r);
    for (std::size_t c = 0; c < dout.cols(); ++c) xrow[c] = drow[c] * inv;
  }
  return dx;
}

Array2 gather_rows(const Array2& x, std::span<const int> idx) {
  check_rows(idx, x.rows());
  Array2 out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = x.row(static_cast<std::size_t>(idx[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Array2 gather_rows_backward(const Array2& dout, std::span<const int> idx, std::size_t n_rows) {
  if (dout.rows() != idx.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gather_rows_backward: index count");
  }
  check_rows(idx, n_rows);
  Array2 dx(n_rows, dout.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto dst = dx.row(static_cast<std::size_t>(idx[r]));
    auto src = dout.row(r);
    for (std::size_t c = 0; c < dout.cols(); ++c) dst[c] += src[c];
  }
  return dx;
}

Array2 scale_rows(const Array2& x, const Array2& g) {
  if (g.cols() != 1 || g.rows() != x.rows()) shape_error("scale_rows", x, g);
  Array2 out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double s = g(r, 0);
    for (double& v : out.row(r)) v *= s;
  }
  require_finite(out, "scale_rows");
  return out;
}

ScaleRowsGrad scale_rows_backward(const Array2& x, const Array2& g, const Array2& dout) {
  if (!x.same_shape(dout)) shape_error("scale_rows_backward", x, dout);
  ScaleRowsGrad grad{Array2(x.rows(), x.cols()), Array2(g.rows(), 1)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double s = g(r, 0);
    auto xrow = x.row(r);
    auto drow = dout.row(r);
    auto dxrow = grad.dx.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dxrow[c] = drow[c] * s;
      dot += drow[c] * xrow[c];
    }
    grad.dg(r, 0) = dot;
  }
  return grad;
}

// ---- projection / normalization ---------------------------------------------

Array2 normalized_projection(const Array2& x, const Array2& p) {
  if (p.cols() != 1 || p.rows() != x.cols()) shape_error("normalized_projection", x, p);
  double sq = 0.0;
  for (double v : p.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm < kTinyNorm) {
    throw Error(ErrorCode::kZeroProjection, "pooling projection norm below 1e-12");
  }
  Array2 out = matmul(x, p);
  out *= 1.0 / norm;
  require_finite(out, "normalized_projection");
  return out;
}

ProjectionGrad normalized_projection_backward(const Array2& x, const Array2& p, const Array2& dout) {
  double sq = 0.0;
  for (double v : p.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm < kTinyNorm) {
    throw Error(ErrorCode::kZeroProjection, "pooling projection norm below 1e-12");
  }
  // y = x p / |p|  =>  dx = dy pᵀ / |p|;  dp = (xᵀ dy)/|p| − p (pᵀ xᵀ dy)/|p|³
  MatmulGrad mg = matmul_backward(x, p, dout);
  ProjectionGrad g{std::move(mg.da), std::move(mg.db)};
  g.dx *= 1.0 / norm;
  double p_dot = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) p_dot += p(i, 0) * g.dp(i, 0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    g.dp(i, 0) = g.dp(i, 0) / norm - p(i, 0) * p_dot / (norm * norm * norm);
  }
  return g;
}

Array2 l2_normalize_rows(const Array2& x) {
  Array2 out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double sq = 0.0;
    for (double v : out.row(r)) sq += v * v;
    const double inv = 1.0 / std::max(std::sqrt(sq), kTinyNorm);
    for (double& v : out.row(r)) v *= inv;
  }
  require_finite(out, "l2_normalize_rows");
  return out;
}

Array2 l2_normalize_rows_backward(const Array2& x, const Array2& out, const Array2& dout) {
  Array2 dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (double v : x.row(r)) sq += v * v;
    const double norm = std::sqrt(sq);
    auto drow = dout.row(r);
    auto dxrow = dx.row(r);
    if (norm < kTinyNorm) {
      // Clamped branch: out = x / 1e-12 is linear in x.
      for (std::size_t c = 0; c < x.cols(); ++c) dxrow[c] = drow[c] / kTinyNorm;
      continue;
    }
    auto yrow = out.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) dot += yrow[c] * drow[c];
    for (std::size_t c = 0; c < x.cols(); ++c) dxrow[c] = (drow[c] - yrow[c] * dot) / norm;
  }
  return dx;
}

// ---- softmax / cross-entropy -------------------------------------------------

Array2 softmax_rows(const Array2& logits) {
  Array2 probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = probs.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      z += out[c];
    }
    for (double& v : out) v /= z;
  }
  return probs;
}

namespace {

void check_labels(const Array2& logits, std::span<const int> labels,
                  std::span<const double> weights) {
  if (labels.size() != logits.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "softmax_xent: label count differs from rows");
  }
  if (!weights.empty() && weights.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "softmax_xent: weight count differs from rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    }
  }
}

double weight_total(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return static_cast<double>(n);
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

}  // namespace

SoftmaxXent softmax_xent(const Array2& logits, std::span<const int> labels,
                         std::span<const double> sample_weights) {
  check_labels(logits, labels, sample_weights);
  SoftmaxXent res;
  res.probs = Array2(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = res.probs.row(r);
    const auto top = static_cast<std::size_t>(std::max_element(in.begin(), in.end()) - in.begin());
    const double mx = in[top];
    double rest = 0.0;  // Σ exp(logit − max) over everything but the max
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      if (c != top) rest += out[c];
    }
    const double z = 1.0 + rest;
    for (double& v : out) v /= z;
    // −log p_y = log z − (logit_y − max); log1p keeps tiny losses exact
    const double nll = std::log1p(rest) - (in[static_cast<std::size_t>(labels[r])] - mx);
    total += (sample_weights.empty() ? 1.0 : sample_weights[r]) * nll;
  }
  const double denom = weight_total(sample_weights, labels.size());
  res.loss = denom > 0.0 ? total / denom : 0.0;
  if (!std::isfinite(res.loss)) throw Error(ErrorCode::kNonFinite, "softmax_xent loss");
  require_finite(res.probs, "softmax_xent");
  return res;
}

Array2 softmax_xent_backward(const Array2& probs, std::span<const int> labels,
                             std::span<const double> sample_weights) {
  check_labels(probs, labels, sample_weights);
  const double denom = weight_total(sample_weights, labels.size());
  Array2 d = probs;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    const double w = (sample_weights.empty() ? 1.0 : sample_weights[r]) / denom;
    for (double& v : d.row(r)) v *= w;
  }
  return d;
}

// ---- ParameterStore -------------------------------------------------------------

Parameter& ParameterStore::add(const std::string& name, Array2 value) {
  if (contains(name)) throw Error(ErrorCode::kInvalidArgument, "duplicate parameter " + name);
  Array2 grad(value.rows(), value.cols());
  entries_.push_back(Parameter{name, std::move(value), std::move(grad)});
  return entries_.back();
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

Parameter& ParameterStore::at(const std::string& name) {
  for (auto& p : entries_)
    if (p.name == name) return p;
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + name);
}

const Parameter& ParameterStore::at(const std::string& name) const {
  for (const auto& p : entries_)
    if (p.name == name) return p;
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + name);
}

std::size_t ParameterStore::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : entries_) p.grad.fill(0.0);
}

nlohmann::ordered_json ParameterStore::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& p : entries_) {
    nlohmann::ordered_json e;
    e["shape"] = {p.value.rows(), p.value.cols()};
    e["data"] = std::vector<double>(p.value.data().begin(), p.value.data().end());
    j[p.name] = std::move(e);
  }
  return j;
}

ParameterStore ParameterStore::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kCorruptCheckpoint, "parameters must be an object");
  ParameterStore store;
  for (const auto& [name, e] : j.items()) {
    try {
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw Error(ErrorCode::kCorruptCheckpoint, "bad shape for " + name);
      auto data = e.at("data").get<std::vector<double>>();
      if (data.size() != shape[0] * shape[1]) {
        throw Error(ErrorCode::kCorruptCheckpoint, "data length mismatch for " + name);
      }
      store.add(name, Array2(shape[0], shape[1], std::move(data)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kCorruptCheckpoint, name + ": " + ex.what());
    }
  }
  return store;
}

// ---- grad_check ---------------------------------------------------------------

GradCheckResult grad_check(ParameterStore& params, const LossFn& f, double eps) {
  params.zero_grad();
  f(params, true);
  // Snapshot analytic gradients before probing.
  std::vector<Array2> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& p : params.entries()) analytic.push_back(p.grad);

  GradCheckResult res;
  for (std::size_t e = 0; e < params.entries().size(); ++e) {
    auto& p = params.entries()[e];
    auto vals = p.value.data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = f(params, false);
      vals[i] = orig - eps;
      const double fm = f(params, false);
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[e].data()[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        res.finite = false;
        res.max_rel_error = std::numeric_limits<double>::infinity();
        res.worst_param = p.name;
        res.worst_index = i;
        continue;
      }
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p.name;
        res.worst_index = i;
      }
    }
  }
  params.zero_grad();
  f(params, true);
  return res;
}

}  // namespace corpgnn
